#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "slb/causal.hpp"

using namespace slb::causal;

namespace {

CausalGraph load_fixture(const std::string& name) {
    std::ifstream in(std::string(SLB_FIXTURE_DIR) + "/" + name);
    REQUIRE(in);
    return graph_from_json(nlohmann::json::parse(in));
}

CausalNode transient(const std::string& id, bool observable = true) {
    return {id, observable, StateKind::transient};
}

TimeLaw law(double m) { return TimeLaw::exact(m); }

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST_CASE("chain_time adds endpoint by endpoint") {
    CHECK(chain_time(law(2.0), law(3.0)).mean == 5.0);
    CHECK(chain_time(TimeLaw{}, TimeLaw::make(2, 1, 4)) == TimeLaw::make(2, 1, 4));
    const auto t = chain_time(TimeLaw::make(2, 1, 3), TimeLaw::make(3, 2, 5));
    // Interval sum oracle: min and max over endpoint combinations.
    double lo = 1e9, hi = -1e9;
    for (double a : {1.0, 3.0}) {
        for (double b : {2.0, 5.0}) {
            lo = std::min(lo, a + b);
            hi = std::max(hi, a + b);
        }
    }
    CHECK(t.low == lo);
    CHECK(t.high == hi);
}

TEST_CASE("fork_time takes component-wise maxima") {
    const std::vector<TimeLaw> two{law(1.5), law(2.5)};
    CHECK(fork_time(two).mean == 2.5);
    const std::vector<TimeLaw> one{TimeLaw::make(2, 1, 3)};
    CHECK(fork_time(one) == one[0]);
    const std::vector<TimeLaw> intervals{TimeLaw::make(1.5, 1, 2), TimeLaw::make(2, 0, 5)};
    const auto f = fork_time(intervals);
    CHECK(f.low == 1.0);
    CHECK(f.high == 5.0);
    CHECK_THROWS_AS(fork_time(std::vector<TimeLaw>{}), std::invalid_argument);
}

TEST_CASE("time law algebra") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 200; ++i) {
        const auto a = law(u(rng)), b = law(u(rng)), c = law(u(rng));
        CHECK(chain_time(a, b).mean == doctest::Approx(chain_time(b, a).mean));
        CHECK(chain_time(chain_time(a, b), c).mean == doctest::Approx(chain_time(a, chain_time(b, c)).mean));
        const std::vector<TimeLaw> twice{a, a};
        CHECK(fork_time(twice) == a);
    }
    CHECK_THROWS_AS(TimeLaw::make(1, 2, 3), std::invalid_argument);
    CHECK_THROWS_AS(TimeLaw::make(-1, -1, 0), std::invalid_argument);
}

TEST_CASE("graph validation") {
    CHECK_THROWS_AS(load_fixture("cycle.json"), GraphError);
    CHECK_THROWS_AS(CausalGraph({transient("A"), transient("A")}, {}), GraphError);
    CHECK_THROWS_AS(CausalGraph({transient("A")}, {{"A", "Z", law(1)}}), GraphError);
    CHECK_THROWS_AS(CausalGraph({{"A", true, std::nullopt}, transient("B")}, {{"A", "B", law(1)}}), GraphError);
    const auto g = load_fixture("chain.json");
    CHECK(g.reaches("A", "C"));
    CHECK_FALSE(g.reaches("C", "A"));
    const auto again = graph_from_json(graph_to_json(g));
    CHECK(again.edges().size() == 2);
}

TEST_CASE("classify_structure") {
    CausalGraph chain({transient("A"), transient("B"), transient("C")}, {{"A", "B", law(1)}, {"B", "C", law(1)}});
    CHECK(classify_structure(chain, {"A", "B", "C"}) == Structure::chain);
    CHECK(classify_structure(chain, {"C", "A", "B"}) == Structure::chain);

    CausalGraph fork({transient("A"), transient("B"), transient("C")}, {{"A", "B", law(1)}, {"A", "C", law(1)}});
    CHECK(classify_structure(fork, {"A", "B", "C"}) == Structure::fork);

    CausalGraph collider({transient("A"), transient("B"), transient("C")}, {{"A", "C", law(1)}, {"B", "C", law(1)}});
    CHECK(classify_structure(collider, {"A", "B", "C"}) == Structure::collider);

    const auto conf = load_fixture("confounder.json");
    CHECK(classify_structure(conf, {"A", "B", "C"}) == Structure::confounder);

    CausalGraph sparse({transient("A"), transient("B"), transient("C")}, {{"A", "B", law(1)}});
    CHECK_THROWS_AS(classify_structure(sparse, {"A", "B", "C"}), GraphError);
    CHECK_THROWS_AS(classify_structure(chain, {"A", "B", "Q"}), GraphError);
}

TEST_CASE("plan for a chain binds one summed window") {
    const auto plan = build_labeling_plan(load_fixture("chain.json"), "A", "C");
    REQUIRE(plan.itm_bindings.size() == 1);
    CHECK(plan.itm_bindings[0].cause_id == "A");
    CHECK(plan.itm_bindings[0].expression.op() == TimeExpression::Op::sum);
    CHECK(plan.itm_bindings[0].expression.evaluate() == TimeLaw::make(5, 3, 8));
    CHECK(plan.required_observers == std::vector<std::string>{"C"});
    CHECK(plan.path_notes.size() == 1);
}

TEST_CASE("plan for a collider binds both transient causes") {
    const auto plan = build_labeling_plan(load_fixture("collider.json"), "A", "C");
    REQUIRE(plan.itm_bindings.size() == 2);
    CHECK(plan.itm_bindings[0].cause_id == "A");
    CHECK(plan.itm_bindings[1].cause_id == "B");
    CHECK(plan.itm_bindings[1].expression.evaluate().mean == 2.5);

    // A steady sibling keeps its state, so no model is bound to it.
    CausalGraph steady({transient("A"), {"B", true, StateKind::steady}, transient("C")},
                       {{"A", "C", law(1)}, {"B", "C", law(2)}});
    CHECK(build_labeling_plan(steady, "A", "C").itm_bindings.size() == 1);
}

TEST_CASE("plan for a confounder lists both paths") {
    const auto g = load_fixture("confounder.json");
    const auto plan = build_labeling_plan(g, "A", "C");
    REQUIRE(plan.path_notes.size() == 2);
    std::vector<std::size_t> lengths{plan.path_notes[0].path.size(), plan.path_notes[1].path.size()};
    std::sort(lengths.begin(), lengths.end());
    CHECK(lengths == std::vector<std::size_t>{2, 3});
    // A->C takes 2, A->B->C takes 3: B is needed to tell them apart.
    CHECK(contains(plan.required_observers, "B"));
    REQUIRE(plan.itm_bindings.size() == 1);
    CHECK(plan.itm_bindings[0].expression.op() == TimeExpression::Op::max);
    CHECK(plan.itm_bindings[0].expression.evaluate().mean == 3.0);

    // Equal path times: no disambiguation needed.
    CausalGraph equal({transient("A"), transient("B"), {"C", true, StateKind::steady}},
                      {{"A", "B", law(1)}, {"A", "C", law(3)}, {"B", "C", law(2)}});
    const auto eq = build_labeling_plan(equal, "A", "C");
    CHECK_FALSE(contains(eq.required_observers, "B"));

    // Unobservable mediator is reported rather than required.
    CausalGraph hidden({transient("A"), transient("B", false), {"C", true, StateKind::steady}},
                       {{"A", "B", law(1)}, {"A", "C", law(2)}, {"B", "C", law(2)}});
    const auto h = build_labeling_plan(hidden, "A", "C");
    CHECK_FALSE(contains(h.required_observers, "B"));
    CHECK(h.unobserved_disambiguators == std::vector<std::string>{"B"});
}

TEST_CASE("plan errors") {
    const auto g = load_fixture("chain.json");
    CHECK_THROWS_AS(build_labeling_plan(g, "C", "A"), PlanError);
    CHECK_THROWS_AS(build_labeling_plan(g, "A", "B"), PlanError);  // B has no observer
    CHECK_THROWS_AS(build_labeling_plan(g, "A", "Z"), PlanError);
}

TEST_CASE("two-ball graph plan") {
    const auto g = load_fixture("two_ball.json");
    const auto plan = build_labeling_plan(g, "ball1_initial", "joint_effect");
    REQUIRE(plan.itm_bindings.size() == 2);
    CHECK(plan.itm_bindings[1].cause_id == "ball2_initial");
    CHECK(plan.path_notes.size() == 2);
    CHECK(plan.unobserved_disambiguators == std::vector<std::string>{"collision"});
    const auto j = plan_to_json(plan);
    CHECK(j["itm_bindings"].size() == 2);
    CHECK(plan_summary(plan).find("ball1_initial -> collision -> joint_effect") != std::string::npos);
}

// Independent oracle: nodes are numbered so every edge goes from a lower to a
// higher index, hence every path is an increasing sequence. Enumerate all
// subsets of intermediate nodes and keep those whose consecutive pairs are
// edges.
TEST_CASE("path composition matches a brute-force path-sum oracle on random DAGs") {
    std::mt19937_64 rng(99);
    int checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 6);  // 3..8 nodes
        std::vector<std::vector<double>> w(n, std::vector<double>(n, -1.0));
        std::vector<CausalNode> nodes;
        for (int i = 0; i < n; ++i) nodes.push_back(transient("n" + std::to_string(i)));
        std::vector<CausalEdge> edges;
        std::uniform_real_distribution<double> um(0.1, 5.0);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (rng() % 2 == 0) {
                    w[i][j] = um(rng);
                    edges.push_back({nodes[i].id, nodes[j].id, law(w[i][j])});
                }
            }
        }
        // Shuffle insertion order so the implementation cannot lean on it.
        std::shuffle(edges.begin(), edges.end(), rng);
        const CausalGraph g(nodes, edges);

        const int src = 0, dst = n - 1;
        std::vector<double> oracle;
        const int inner = n - 2;
        for (int mask = 0; mask < (1 << inner); ++mask) {
            std::vector<int> seq{src};
            for (int k = 0; k < inner; ++k) {
                if (mask & (1 << k)) seq.push_back(k + 1);
            }
            seq.push_back(dst);
            double total = 0.0;
            bool ok = true;
            for (std::size_t s = 0; s + 1 < seq.size() && ok; ++s) {
                if (w[seq[s]][seq[s + 1]] < 0.0) ok = false;
                else total += w[seq[s]][seq[s + 1]];
            }
            if (ok) oracle.push_back(total);
        }
        if (oracle.empty()) {
            CHECK_THROWS_AS(build_labeling_plan(g, nodes[src].id, nodes[dst].id), PlanError);
            continue;
        }
        const auto plan = build_labeling_plan(g, nodes[src].id, nodes[dst].id);
        std::vector<double> got;
        for (const auto& note : plan.path_notes) got.push_back(note.composed.mean);
        std::sort(oracle.begin(), oracle.end());
        std::sort(got.begin(), got.end());
        REQUIRE(got.size() == oracle.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
        for (const auto& b : plan.itm_bindings) CHECK(g.reaches(b.cause_id, nodes[dst].id));
        ++checked;
    }
    CHECK(checked > 20);
}
