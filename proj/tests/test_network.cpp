#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "choicectx/network.hpp"
#include "test_helpers.hpp"

using namespace choicectx;
using namespace testutil;

namespace {

std::vector<TemporalEdge> parse(const std::string& text, long* dropped = nullptr) {
    std::istringstream in(text);
    return ingest_edges(in, dropped);
}

}  // namespace

TEST_CASE("ingest parses tab-separated edges sorted by timestamp") {
    auto edges = parse("3\t4\t10\n1\t2\t5\n2\t3\t7\n");
    REQUIRE(edges.size() == 3);
    CHECK(edges[0].src == 1);
    CHECK(edges[0].dst == 2);
    CHECK(edges[0].t == 5.0);
    CHECK(edges[1].t == 7.0);
    CHECK(edges[2].t == 10.0);
}

TEST_CASE("ingest drops and counts self-loops") {
    long dropped = -1;
    auto edges = parse("1\t2\t1\n7\t7\t2\n2\t1\t3\n", &dropped);
    CHECK(edges.size() == 2);
    CHECK(dropped == 1);
}

TEST_CASE("ingest reports the offending line number") {
    CHECK_THROWS_WITH_AS(parse("1\t2\t1\nnope\n"), doctest::Contains("line 2"),
                         std::runtime_error);
}

TEST_CASE("edge files round-trip through write_edges/load_edges") {
    TempFile file("edges.tsv");
    std::vector<TemporalEdge> edges = {{1, 2, 0.5}, {2, 3, 1.25}, {3, 1, 2.0}};
    write_edges(file.path, edges);
    auto back = load_edges(file.path);
    REQUIRE(back.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(back[i].src == edges[i].src);
        CHECK(back[i].dst == edges[i].dst);
        CHECK(back[i].t == edges[i].t);
    }
}

TEST_CASE("node features of a never-observed candidate are all zero") {
    GraphState g;
    g.add_edge(1, 2, 0.0);
    Vector f = g.node_features(1, 99, 5.0);
    REQUIRE(f.size() == 6);
    CHECK(f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("recency features equal 1/ln(2) for an event happening now") {
    GraphState g;
    g.add_edge(5, 1, 3.0);  // w=5 sends to u=1 at t=3
    Vector f = g.node_features(1, 5, 3.0);
    const double s = 1.0 / std::log(2.0);
    CHECK(f[2] == doctest::Approx(std::log(2.0)).epsilon(1e-14));  // ln(1 + weight 1)
    CHECK(f[3] == doctest::Approx(s).epsilon(1e-14));              // last send by w
    CHECK(f[5] == doctest::Approx(s).epsilon(1e-14));              // last w->u
    CHECK(f[4] == 0.0);  // w never received
}

TEST_CASE("degree and shared-neighbor features use natural logs of counts") {
    GraphState g;
    g.add_edge(1, 3, 0.0);  // u and w share neighbor 3
    g.add_edge(2, 3, 1.0);
    g.add_edge(4, 2, 2.0);  // w = 2 has in-degree 1
    Vector f = g.node_features(1, 2, 3.0);
    CHECK(f[0] == doctest::Approx(std::log(1.0)).epsilon(1e-14));
    CHECK(f[1] == doctest::Approx(std::log(1.0)).epsilon(1e-14));

    g.add_edge(5, 2, 4.0);  // second distinct in-neighbor
    g.add_edge(5, 2, 5.0);  // repeat: in-degree counts distinct senders
    CHECK(g.node_features(1, 2, 6.0)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("a wedge with a single candidate is skipped and counted") {
    auto extraction = extract_closures(parse("1\t2\t0\n2\t3\t1\n1\t3\t2\n"));
    CHECK(extraction.dataset.size() == 0);
    CHECK(extraction.events.empty());
    CHECK(extraction.skipped_small_sets == 1);
}

TEST_CASE("a two-candidate wedge becomes one observation with the right choice") {
    // 1->2, 2->3, 2->4, then the closing edge 1->3 over wedge 1->2->3.
    auto extraction = extract_closures(parse("1\t2\t0\n2\t3\t1\n2\t4\t2\n1\t3\t3\n"));
    REQUIRE(extraction.dataset.size() == 1);
    REQUIRE(extraction.events.size() == 1);
    const ClosureEvent& e = extraction.events[0];
    CHECK(e.u == 1);
    CHECK(e.v == 2);
    CHECK(e.w == 3);
    CHECK(e.t == 3.0);
    CHECK(e.candidates == std::vector<std::int64_t>{3, 4});
    const Observation& o = extraction.dataset.observations[0];
    CHECK(o.items.rows() == 2);
    CHECK(o.items.cols() == 6);
    CHECK(o.chosen == 0);
    // Both candidates have in-degree 1 and share intermediary 2 with u,
    // so the first two features are ln 1 = 0.
    CHECK(o.items.col(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(o.items.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("repeat edges only update state") {
    auto extraction = extract_closures(parse(
        "1\t2\t0\n2\t3\t1\n2\t4\t2\n1\t3\t3\n1\t3\t4\n"));
    CHECK(extraction.dataset.size() == 1);
    CHECK(extraction.events.size() == 1);
}

TEST_CASE("closure log serializes one record per event") {
    ClosureEvent e;
    e.u = 1;
    e.v = 2;
    e.w = 3;
    e.candidates = {3, 4};
    e.t = 7.5;
    std::string text = closure_log_jsonl({e, e});
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.find("\"candidates\":[3,4]") != std::string::npos);
}

TEST_CASE("synthetic generation is deterministic for a fixed seed") {
    Model gen = Model::zeros(ModelKind::mnl, 6);
    SyntheticNetConfig config;
    config.n_nodes = 50;
    config.target_closures = 40;
    config.seed = 9;
    SyntheticNet a = generate_synthetic(gen, config);
    SyntheticNet b = generate_synthetic(gen, config);
    REQUIRE(a.edges.size() == b.edges.size());
    for (size_t i = 0; i < a.edges.size(); ++i) {
        CHECK(a.edges[i].src == b.edges[i].src);
        CHECK(a.edges[i].dst == b.edges[i].dst);
        CHECK(a.edges[i].t == b.edges[i].t);
    }
    CHECK(a.closures == b.closures);
    CHECK(a.closures >= config.target_closures);
}

TEST_CASE("closure_prob near zero yields no closure observations") {
    Model gen = Model::zeros(ModelKind::mnl, 6);
    SyntheticNetConfig config;
    config.n_nodes = 30;
    config.target_closures = 5;
    config.closure_prob = 1e-9;
    config.seed = 10;
    SyntheticNet net = generate_synthetic(gen, config);
    CHECK(net.closures == 0);
    CHECK(net.dataset.size() == 0);
}

TEST_CASE("a zero-parameter generator picks candidates uniformly") {
    Model gen = Model::zeros(ModelKind::mnl, 6);
    SyntheticNetConfig config;
    config.n_nodes = 300;
    config.target_closures = 5'000;
    config.seed = 11;
    SyntheticNet net = generate_synthetic(gen, config);
    REQUIRE(net.dataset.size() >= 5'000);
    // Under a zero-parameter generator the chosen index is uniform over
    // each (id-sorted) candidate set, so the mean relative position is 0.5.
    // The per-observation variance is at most 1/4, putting 0.02 at ~3 SE.
    double sum = 0.0;
    long n = 0;
    for (const auto& o : net.dataset.observations) {
        const long k = o.items.rows();
        if (k < 2) continue;
        sum += double(o.chosen) / double(k - 1);
        ++n;
    }
    REQUIRE(n >= 5'000);
    CHECK(std::abs(sum / double(n) - 0.5) < 0.02);
}

TEST_CASE("extraction of a generated network reproduces the recorded choices") {
    Model gen = Model::zeros(ModelKind::mnl, 6);
    gen.theta = vec({2, 1, 3, 1, 3, 5});
    SyntheticNetConfig config;
    config.n_nodes = 80;
    config.target_closures = 300;
    config.seed = 12;
    SyntheticNet net = generate_synthetic(gen, config);
    auto extraction = extract_closures(net.edges, config.seed);
    CHECK(extraction.dataset.size() > 0);
    // Every extracted event names a chosen target inside its candidate set.
    for (const auto& e : extraction.events) {
        bool found = false;
        for (std::int64_t c : e.candidates) found = found || c == e.w;
        CHECK(found);
    }
}
