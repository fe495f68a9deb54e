#include "choicectx/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

namespace choicectx {

const std::unordered_set<std::int64_t> GraphState::kEmpty;

const std::vector<std::string> kNetworkFeatureNames = {
    "log_in_degree",    "log_shared_neighbors", "log_reciprocal_weight",
    "send_recency",     "receive_recency",      "reciprocal_recency"};

std::vector<TemporalEdge> ingest_edges(std::istream& in, long* dropped_self_loops) {
    std::vector<TemporalEdge> edges;
    long dropped = 0;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        TemporalEdge e;
        if (!(ss >> e.src >> e.dst >> e.t))
            throw DataError("edge list line " + std::to_string(line_no) +
                            ": expected 'src dst timestamp'");
        if (e.src == e.dst) {
            ++dropped;
            continue;
        }
        edges.push_back(e);
    }
    std::stable_sort(edges.begin(), edges.end(),
                     [](const TemporalEdge& a, const TemporalEdge& b) { return a.t < b.t; });
    if (dropped_self_loops) *dropped_self_loops = dropped;
    return edges;
}

std::vector<TemporalEdge> load_edges(const std::string& path, long* dropped_self_loops) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open edge list: " + path);
    return ingest_edges(in, dropped_self_loops);
}

void write_edges(const std::string& path, const std::vector<TemporalEdge>& edges) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write edge list: " + path);
    for (const auto& e : edges) out << e.src << '\t' << e.dst << '\t' << e.t << '\n';
}

void GraphState::add_edge(std::int64_t src, std::int64_t dst, double t) {
    out_[src].insert(dst);
    in_[dst].insert(src);
    all_[src].insert(dst);
    all_[dst].insert(src);
    weight_[src][dst] += 1.0;
    last_pair_[src][dst] = t;
    last_send_[src] = t;
    last_recv_[dst] = t;
}

namespace {

double recency(double now, double last, bool seen) {
    if (!seen) return 0.0;
    return 1.0 / std::log(2.0 + (now - last));
}

}  // namespace

Vector GraphState::node_features(std::int64_t u, std::int64_t w, double now) const {
    Vector f(6);

    auto in_it = in_.find(w);
    const double in_deg = in_it == in_.end() ? 0.0 : double(in_it->second.size());
    // Wedge candidates always have at least one in-neighbor and one shared
    // neighbor (the intermediary); clamp so ad-hoc queries stay finite.
    f[0] = std::log(std::max(in_deg, 1.0));

    auto au = all_.find(u);
    auto aw = all_.find(w);
    long shared = 0;
    if (au != all_.end() && aw != all_.end()) {
        const auto& small = au->second.size() <= aw->second.size() ? au->second : aw->second;
        const auto& big = au->second.size() <= aw->second.size() ? aw->second : au->second;
        for (auto node : small) shared += big.count(node);
    }
    f[1] = std::log(double(std::max(shared, 1L)));

    double w_to_u = 0.0;
    if (auto it = weight_.find(w); it != weight_.end())
        if (auto jt = it->second.find(u); jt != it->second.end()) w_to_u = jt->second;
    f[2] = std::log1p(w_to_u);

    auto ls = last_send_.find(w);
    f[3] = recency(now, ls == last_send_.end() ? 0.0 : ls->second, ls != last_send_.end());
    auto lr = last_recv_.find(w);
    f[4] = recency(now, lr == last_recv_.end() ? 0.0 : lr->second, lr != last_recv_.end());

    bool pair_seen = false;
    double pair_t = 0.0;
    if (auto it = last_pair_.find(w); it != last_pair_.end())
        if (auto jt = it->second.find(u); jt != it->second.end()) {
            pair_seen = true;
            pair_t = jt->second;
        }
    f[5] = recency(now, pair_t, pair_seen);
    return f;
}

const std::unordered_set<std::int64_t>& GraphState::out_neighbors(std::int64_t u) const {
    auto it = out_.find(u);
    return it == out_.end() ? kEmpty : it->second;
}

bool GraphState::has_edge(std::int64_t src, std::int64_t dst) const {
    auto it = out_.find(src);
    return it != out_.end() && it->second.count(dst) > 0;
}

namespace {

// Candidate set for a wedge through v from u: out-nbrs(v) minus
// out-nbrs(u) minus {u}, in sorted order for determinism.
std::vector<std::int64_t> wedge_candidates(const GraphState& g, std::int64_t u,
                                           std::int64_t v) {
    std::vector<std::int64_t> cand;
    for (auto w : g.out_neighbors(v))
        if (w != u && !g.has_edge(u, w)) cand.push_back(w);
    std::sort(cand.begin(), cand.end());
    return cand;
}

Observation featurize_candidates(const GraphState& g, std::int64_t u,
                                 const std::vector<std::int64_t>& cand, std::int64_t chosen,
                                 double now) {
    Observation obs;
    obs.items.resize(cand.size(), 6);
    obs.chosen = -1;
    for (size_t i = 0; i < cand.size(); ++i) {
        obs.items.row(i) = g.node_features(u, cand[i], now).transpose();
        if (cand[i] == chosen) obs.chosen = static_cast<int>(i);
    }
    return obs;
}

}  // namespace

ClosureExtraction extract_closures(const std::vector<TemporalEdge>& edges,
                                   std::uint64_t seed) {
    ClosureExtraction out;
    out.dataset.d = 6;
    GraphState g;
    std::mt19937_64 rng(seed);

    for (const auto& e : edges) {
        if (e.src == e.dst) {
            ++out.dropped_self_loops;
            g.add_edge(e.src, e.dst, e.t);
            continue;
        }
        if (!g.has_edge(e.src, e.dst)) {
            // Intermediaries v with u -> v and v -> w already present.
            std::vector<std::int64_t> mids;
            for (auto v : g.out_neighbors(e.src))
                if (v != e.dst && g.has_edge(v, e.dst)) mids.push_back(v);
            if (!mids.empty()) {
                std::sort(mids.begin(), mids.end());
                std::uniform_int_distribution<size_t> pick(0, mids.size() - 1);
                const std::int64_t v = mids[pick(rng)];
                auto cand = wedge_candidates(g, e.src, v);
                if (cand.size() < 2) {
                    ++out.skipped_small_sets;
                } else {
                    Observation obs = featurize_candidates(g, e.src, cand, e.dst, e.t);
                    out.dataset.observations.push_back(std::move(obs));
                    out.events.push_back({e.src, v, e.dst, cand, e.t});
                }
            }
        }
        g.add_edge(e.src, e.dst, e.t);
    }
    return out;
}

std::string closure_log_jsonl(const std::vector<ClosureEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        nlohmann::json j;
        j["u"] = e.u;
        j["v"] = e.v;
        j["w"] = e.w;
        j["candidates"] = e.candidates;
        j["t"] = e.t;
        out += j.dump();
        out += '\n';
    }
    return out;
}

SyntheticNet generate_synthetic(const Model& model, const SyntheticNetConfig& config) {
    if (model.d != 6) throw DataError("generate_synthetic: model must have d = 6");
    SyntheticNet net;
    net.dataset.d = 6;
    GraphState g;
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::int64_t> node(0, config.n_nodes - 1);
    std::exponential_distribution<double> gap(config.event_rate);

    double now = 0.0;
    const long max_events = config.target_closures * 400 + 10'000;
    for (long step = 0; step < max_events && net.closures < config.target_closures; ++step) {
        now += gap(rng);
        bool closed = false;
        if (unit(rng) < config.closure_prob) {
            // Pick a random wedge: u with an out-neighbor v that itself has
            // candidates u has not linked to.
            const std::int64_t u = node(rng);
            const auto& outs = g.out_neighbors(u);
            if (!outs.empty()) {
                std::vector<std::int64_t> mids(outs.begin(), outs.end());
                std::sort(mids.begin(), mids.end());
                std::uniform_int_distribution<size_t> pick(0, mids.size() - 1);
                const std::int64_t v = mids[pick(rng)];
                auto cand = wedge_candidates(g, u, v);
                if (cand.size() >= 2) {
                    Observation obs = featurize_candidates(g, u, cand, cand[0], now);
                    Vector probs = choice_probabilities(model, obs.items);
                    double r = unit(rng), acc = 0.0;
                    size_t chosen = cand.size() - 1;
                    for (size_t i = 0; i < cand.size(); ++i) {
                        acc += probs[int(i)];
                        if (r <= acc) {
                            chosen = i;
                            break;
                        }
                    }
                    obs.chosen = static_cast<int>(chosen);
                    net.dataset.observations.push_back(obs);
                    net.edges.push_back({u, cand[chosen], now});
                    g.add_edge(u, cand[chosen], now);
                    ++net.closures;
                    closed = true;
                }
            }
        }
        if (!closed) {
            std::int64_t src = node(rng), dst = node(rng);
            while (dst == src) dst = node(rng);
            net.edges.push_back({src, dst, now});
            g.add_edge(src, dst, now);
        }
    }
    return net;
}

}  // namespace choicectx
