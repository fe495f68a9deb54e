#pragma once

#include <cstdint>
#include <iosfwd>
#include <unordered_map>
#include <unordered_set>

#include "choicectx/dataset.hpp"
#include "choicectx/model.hpp"

namespace choicectx {

struct TemporalEdge {
    std::int64_t src = 0;
    std::int64_t dst = 0;
    double t = 0.0;
};

/// Parse a tab-separated "src dst timestamp" edge list. Self-loops are
/// dropped (counted) and edges are stably sorted by timestamp.
std::vector<TemporalEdge> ingest_edges(std::istream& in, long* dropped_self_loops = nullptr);
std::vector<TemporalEdge> load_edges(const std::string& path,
                                     long* dropped_self_loops = nullptr);
void write_edges(const std::string& path, const std::vector<TemporalEdge>& edges);

/// Incrementally maintained directed multigraph with the timestamps needed
/// for recency features.
class GraphState {
public:
    void add_edge(std::int64_t src, std::int64_t dst, double t);

    /// Six features of candidate w for a new edge u -> w at time `now`
    /// (natural logs; recency s(t) = 1/ln(2 + now - t), 0 if never):
    ///   [ ln in-degree(w), ln shared-neighbors(u, w), ln(1 + weight(w->u)),
    ///     s(last send by w), s(last receive by w), s(last w->u) ]
    /// In-degree counts distinct in-neighbors; shared neighbors are the
    /// intersection of the in-or-out neighbor sets of u and w.
    Vector node_features(std::int64_t u, std::int64_t w, double now) const;

    const std::unordered_set<std::int64_t>& out_neighbors(std::int64_t u) const;

    bool has_edge(std::int64_t src, std::int64_t dst) const;

private:
    friend struct GraphStateTestAccess;
    static const std::unordered_set<std::int64_t> kEmpty;

    std::unordered_map<std::int64_t, std::unordered_set<std::int64_t>> out_;
    std::unordered_map<std::int64_t, std::unordered_set<std::int64_t>> in_;
    std::unordered_map<std::int64_t, std::unordered_set<std::int64_t>> all_;
    std::unordered_map<std::int64_t, std::unordered_map<std::int64_t, double>> weight_;
    std::unordered_map<std::int64_t, std::unordered_map<std::int64_t, double>> last_pair_;
    std::unordered_map<std::int64_t, double> last_send_;
    std::unordered_map<std::int64_t, double> last_recv_;
};

extern const std::vector<std::string> kNetworkFeatureNames;

struct ClosureEvent {
    std::int64_t u = 0;
    std::int64_t v = 0;
    std::int64_t w = 0;
    std::vector<std::int64_t> candidates;
    double t = 0.0;
};

struct ClosureExtraction {
    ChoiceDataset dataset;
    std::vector<ClosureEvent> events;
    long skipped_small_sets = 0;  // wedges whose candidate set had < 2 items
    long dropped_self_loops = 0;
};

/// Replay edges in time order. A new edge u -> w that closes a wedge
/// u -> v -> w becomes a choice observation: v is drawn uniformly among
/// intermediaries, the choice set is out-nbrs(v) - out-nbrs(u) - {u}
/// featurized from the state just before the edge, and w is the chosen
/// item. Repeat edges only update state.
ClosureExtraction extract_closures(const std::vector<TemporalEdge>& edges,
                                   std::uint64_t seed = 0);

std::string closure_log_jsonl(const std::vector<ClosureEvent>& events);

struct SyntheticNetConfig {
    int n_nodes = 1000;
    long target_closures = 50'000;
    double closure_prob = 0.1;
    double event_rate = 5.0;  // Poisson rate for timestamp gaps
    std::uint64_t seed = 0;
};

struct SyntheticNet {
    std::vector<TemporalEdge> edges;
    ChoiceDataset dataset;  // ground-truth closure choices
    long closures = 0;      // observations emitted (|C| >= 2)
};

/// Grow a network whose triadic closures follow `model` (over the six
/// node features above). Each step either closes a wedge (prob
/// closure_prob, when one exists) by sampling w from the model's choice
/// distribution over the candidate set, or adds a uniform random edge.
SyntheticNet generate_synthetic(const Model& model, const SyntheticNetConfig& config);

}  // namespace choicectx
