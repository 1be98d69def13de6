#include "slb/causal.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace slb::causal {

const char* to_string(StateKind k) { return k == StateKind::steady ? "steady" : "transient"; }

StateKind parse_state_kind(const std::string& s) {
    if (s == "steady") return StateKind::steady;
    if (s == "transient") return StateKind::transient;
    throw GraphError("unknown state_kind '" + s + "'");
}

TimeLaw TimeLaw::make(double mean, double low, double high) {
    if (!std::isfinite(mean) || !std::isfinite(low) || !std::isfinite(high) || low < 0.0 || low > mean ||
        mean > high) {
        std::ostringstream msg;
        msg << "time law needs 0 <= low <= mean <= high, got (" << low << ", " << mean << ", " << high << ")";
        throw std::invalid_argument(msg.str());
    }
    return TimeLaw{mean, low, high};
}

TimeLaw chain_time(const TimeLaw& first, const TimeLaw& second) {
    return TimeLaw{first.mean + second.mean, first.low + second.low, first.high + second.high};
}

TimeLaw fork_time(std::span<const TimeLaw> times) {
    if (times.empty()) throw std::invalid_argument("fork_time needs at least one time law");
    TimeLaw out = times.front();
    for (const auto& t : times.subspan(1)) {
        out.mean = std::max(out.mean, t.mean);
        out.low = std::max(out.low, t.low);
        out.high = std::max(out.high, t.high);
    }
    return out;
}

CausalGraph::CausalGraph(std::vector<CausalNode> nodes, std::vector<CausalEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].id.empty()) throw GraphError("node ids must be non-empty");
        if (!index_.emplace(nodes_[i].id, i).second) throw GraphError("duplicate node id '" + nodes_[i].id + "'");
    }
    out_edges_.resize(nodes_.size());
    std::vector<int> indegree(nodes_.size(), 0);
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const auto& edge = edges_[e];
        if (!has_node(edge.cause) || !has_node(edge.effect)) {
            throw GraphError("edge " + edge.cause + "->" + edge.effect + " references an unknown node");
        }
        if (edge.cause == edge.effect) throw GraphError("self-loop on '" + edge.cause + "'");
        if (!seen.emplace(edge.cause, edge.effect).second) {
            throw GraphError("duplicate edge " + edge.cause + "->" + edge.effect);
        }
        if (!nodes_[index_.at(edge.cause)].state_kind) {
            throw GraphError("cause node '" + edge.cause + "' has no state_kind");
        }
        out_edges_[index_.at(edge.cause)].push_back(e);
        ++indegree[index_.at(edge.effect)];
    }
    // Kahn's algorithm: anything left unvisited sits on a cycle.
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (indegree[i] == 0) ready.push_back(i);
    }
    std::size_t visited = 0;
    while (!ready.empty()) {
        const auto n = ready.back();
        ready.pop_back();
        ++visited;
        for (auto e : out_edges_[n]) {
            if (--indegree[index_.at(edges_[e].effect)] == 0) ready.push_back(index_.at(edges_[e].effect));
        }
    }
    if (visited != nodes_.size()) throw GraphError("graph contains a directed cycle");
}

const CausalNode& CausalGraph::node(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw GraphError("unknown node '" + id + "'");
    return nodes_[it->second];
}

const CausalEdge* CausalGraph::find_edge(const std::string& cause, const std::string& effect) const {
    const auto it = index_.find(cause);
    if (it == index_.end()) return nullptr;
    for (auto e : out_edges_[it->second]) {
        if (edges_[e].effect == effect) return &edges_[e];
    }
    return nullptr;
}

std::vector<std::string> CausalGraph::parents(const std::string& id) const {
    node(id);
    std::vector<std::string> out;
    for (const auto& e : edges_) {
        if (e.effect == id) out.push_back(e.cause);
    }
    return out;
}

std::vector<std::string> CausalGraph::children(const std::string& id) const {
    std::vector<std::string> out;
    for (auto e : out_edges_[index_.at(node(id).id)]) out.push_back(edges_[e].effect);
    return out;
}

bool CausalGraph::reaches(const std::string& from, const std::string& to) const {
    node(from);
    node(to);
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<std::size_t> stack{index_.at(from)};
    while (!stack.empty()) {
        const auto n = stack.back();
        stack.pop_back();
        if (nodes_[n].id == to) return true;
        if (seen[n]) continue;
        seen[n] = true;
        for (auto e : out_edges_[n]) stack.push_back(index_.at(edges_[e].effect));
    }
    return false;
}

std::vector<Path> CausalGraph::all_paths(const std::string& from, const std::string& to) const {
    node(from);
    node(to);
    std::vector<Path> out;
    Path current{from};
    std::function<void(std::size_t)> walk = [&](std::size_t n) {
        if (nodes_[n].id == to) {
            out.push_back(current);
            return;
        }
        for (auto e : out_edges_[n]) {
            current.push_back(edges_[e].effect);
            walk(index_.at(edges_[e].effect));
            current.pop_back();
        }
    };
    if (from != to) walk(index_.at(from));
    return out;
}

TimeLaw CausalGraph::path_law(const Path& path) const {
    TimeLaw total;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const auto* e = find_edge(path[i], path[i + 1]);
        if (!e) throw GraphError("no edge " + path[i] + "->" + path[i + 1]);
        total = chain_time(total, e->law);
    }
    return total;
}

CausalGraph graph_from_json(const nlohmann::json& doc) {
    std::vector<CausalNode> nodes;
    for (const auto& n : doc.at("nodes")) {
        CausalNode node;
        node.id = n.at("id").get<std::string>();
        node.observable = n.value("observable", true);
        if (n.contains("state_kind") && !n.at("state_kind").is_null()) {
            node.state_kind = parse_state_kind(n.at("state_kind").get<std::string>());
        }
        nodes.push_back(std::move(node));
    }
    std::vector<CausalEdge> edges;
    for (const auto& e : doc.at("edges")) {
        const double mean = e.at("mean").get<double>();
        edges.push_back({e.at("cause").get<std::string>(), e.at("effect").get<std::string>(),
                         TimeLaw::make(mean, e.value("low", mean), e.value("high", mean))});
    }
    return CausalGraph(std::move(nodes), std::move(edges));
}

nlohmann::json graph_to_json(const CausalGraph& g) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : g.nodes()) {
        nlohmann::json j{{"id", n.id}, {"observable", n.observable}};
        if (n.state_kind) j["state_kind"] = to_string(*n.state_kind);
        nodes.push_back(std::move(j));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges()) {
        edges.push_back({{"cause", e.cause},
                         {"effect", e.effect},
                         {"mean", e.law.mean},
                         {"low", e.law.low},
                         {"high", e.law.high}});
    }
    return {{"nodes", nodes}, {"edges", edges}};
}

const char* to_string(Structure s) {
    switch (s) {
        case Structure::chain: return "chain";
        case Structure::fork: return "fork";
        case Structure::collider: return "collider";
        case Structure::confounder: return "confounder";
        case Structure::other: return "other";
    }
    return "?";
}

Structure classify_structure(const CausalGraph& g, const std::array<std::string, 3>& ids) {
    for (const auto& id : ids) g.node(id);
    if (ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2]) throw GraphError("classify needs three distinct nodes");

    std::vector<std::pair<int, int>> induced;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            if (a != b && g.find_edge(ids[a], ids[b])) induced.emplace_back(a, b);
        }
    }
    std::array<int, 3> degree{};
    for (auto [a, b] : induced) {
        ++degree[a];
        ++degree[b];
    }
    if (std::any_of(degree.begin(), degree.end(), [](int d) { return d == 0; })) {
        throw GraphError("the three nodes do not induce a connected subgraph");
    }
    if (induced.size() == 3) return Structure::confounder;  // acyclic triangle: A->B, A->C, B->C
    if (induced.size() != 2) return Structure::other;
    const auto [a0, b0] = induced[0];
    const auto [a1, b1] = induced[1];
    if (a0 == a1) return Structure::fork;
    if (b0 == b1) return Structure::collider;
    return Structure::chain;
}

TimeExpression TimeExpression::edge(std::string cause, std::string effect, TimeLaw law) {
    TimeExpression e;
    e.op_ = Op::edge;
    e.cause_ = std::move(cause);
    e.effect_ = std::move(effect);
    e.law_ = law;
    return e;
}

TimeExpression TimeExpression::sum(std::vector<TimeExpression> terms) {
    if (terms.empty()) throw std::invalid_argument("SUM needs at least one term");
    TimeExpression e;
    e.op_ = Op::sum;
    e.terms_ = std::move(terms);
    return e;
}

TimeExpression TimeExpression::max(std::vector<TimeExpression> terms) {
    if (terms.empty()) throw std::invalid_argument("MAX needs at least one term");
    TimeExpression e;
    e.op_ = Op::max;
    e.terms_ = std::move(terms);
    return e;
}

TimeLaw TimeExpression::evaluate() const {
    switch (op_) {
        case Op::edge: return law_;
        case Op::sum: {
            TimeLaw total;
            for (const auto& t : terms_) total = chain_time(total, t.evaluate());
            return total;
        }
        case Op::max: {
            std::vector<TimeLaw> laws;
            for (const auto& t : terms_) laws.push_back(t.evaluate());
            return fork_time(laws);
        }
    }
    return {};
}

nlohmann::json TimeExpression::to_json() const {
    if (op_ == Op::edge) {
        return {{"op", "edge"},
                {"cause", cause_},
                {"effect", effect_},
                {"mean", law_.mean},
                {"low", law_.low},
                {"high", law_.high}};
    }
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : terms_) terms.push_back(t.to_json());
    return {{"op", op_ == Op::sum ? "sum" : "max"}, {"terms", terms}};
}

namespace {

TimeExpression path_expression(const CausalGraph& g, const Path& path) {
    std::vector<TimeExpression> edges;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        edges.push_back(TimeExpression::edge(path[i], path[i + 1], g.find_edge(path[i], path[i + 1])->law));
    }
    return TimeExpression::sum(std::move(edges));
}

TimeExpression paths_expression(const CausalGraph& g, const std::vector<Path>& paths) {
    if (paths.size() == 1) return path_expression(g, paths.front());
    std::vector<TimeExpression> alternatives;
    for (const auto& p : paths) alternatives.push_back(path_expression(g, p));
    return TimeExpression::max(std::move(alternatives));
}

}  // namespace

SelfLabelingPlan build_labeling_plan(const CausalGraph& g, const std::string& cause, const std::string& effect) {
    if (!g.has_node(cause)) throw PlanError("unknown cause '" + cause + "'");
    if (!g.has_node(effect)) throw PlanError("unknown effect '" + effect + "'");
    if (!g.node(effect).observable) throw PlanError("effect '" + effect + "' has no observer");
    const auto paths = g.all_paths(cause, effect);
    if (paths.empty()) throw PlanError("'" + effect + "' is not reachable from '" + cause + "'");

    SelfLabelingPlan plan;
    plan.target_pair = {cause, effect};
    for (const auto& p : paths) plan.path_notes.push_back({p, g.path_law(p)});

    plan.itm_bindings.push_back({cause, paths_expression(g, paths)});
    for (const auto& parent : g.parents(effect)) {
        if (parent == cause || g.reaches(cause, parent)) continue;  // mediators are covered by the cause's paths
        if (g.node(parent).state_kind != StateKind::transient) continue;
        plan.itm_bindings.push_back({parent, paths_expression(g, g.all_paths(parent, effect))});
    }

    plan.required_observers.push_back(effect);
    const bool all_same = std::all_of(plan.path_notes.begin(), plan.path_notes.end(),
                                      [&](const PathNote& n) { return n.composed == plan.path_notes.front().composed; });
    if (!all_same) {
        // An intermediate node tells the paths apart when some path avoids it.
        std::vector<std::string> candidates;
        for (const auto& p : paths) {
            for (std::size_t i = 1; i + 1 < p.size(); ++i) {
                if (std::find(candidates.begin(), candidates.end(), p[i]) != candidates.end()) continue;
                const bool on_every_path = std::all_of(paths.begin(), paths.end(), [&](const Path& q) {
                    return std::find(q.begin(), q.end(), p[i]) != q.end();
                });
                if (!on_every_path) candidates.push_back(p[i]);
            }
        }
        for (const auto& c : candidates) {
            (g.node(c).observable ? plan.required_observers : plan.unobserved_disambiguators).push_back(c);
        }
    }
    return plan;
}

nlohmann::json plan_to_json(const SelfLabelingPlan& plan) {
    nlohmann::json bindings = nlohmann::json::array();
    for (const auto& b : plan.itm_bindings) {
        const auto law = b.expression.evaluate();
        bindings.push_back({{"cause", b.cause_id},
                            {"expression", b.expression.to_json()},
                            {"mean", law.mean},
                            {"low", law.low},
                            {"high", law.high}});
    }
    nlohmann::json notes = nlohmann::json::array();
    for (const auto& n : plan.path_notes) {
        notes.push_back({{"path", n.path}, {"mean", n.composed.mean}, {"low", n.composed.low}, {"high", n.composed.high}});
    }
    return {{"target", {{"cause", plan.target_pair.first}, {"effect", plan.target_pair.second}}},
            {"itm_bindings", bindings},
            {"required_observers", plan.required_observers},
            {"path_notes", notes},
            {"unobserved_disambiguators", plan.unobserved_disambiguators}};
}

TimeExpression expression_from_json(const nlohmann::json& doc) {
    const auto op = doc.at("op").get<std::string>();
    if (op == "edge") {
        return TimeExpression::edge(doc.at("cause").get<std::string>(), doc.at("effect").get<std::string>(),
                                    TimeLaw::make(doc.at("mean").get<double>(), doc.at("low").get<double>(),
                                                  doc.at("high").get<double>()));
    }
    std::vector<TimeExpression> terms;
    for (const auto& t : doc.at("terms")) terms.push_back(expression_from_json(t));
    if (op == "sum") return TimeExpression::sum(std::move(terms));
    if (op == "max") return TimeExpression::max(std::move(terms));
    throw PlanError("unknown time expression op '" + op + "'");
}

SelfLabelingPlan plan_from_json(const nlohmann::json& doc) {
    try {
        SelfLabelingPlan plan;
        plan.target_pair = {doc.at("target").at("cause").get<std::string>(),
                            doc.at("target").at("effect").get<std::string>()};
        for (const auto& b : doc.at("itm_bindings")) {
            plan.itm_bindings.push_back({b.at("cause").get<std::string>(), expression_from_json(b.at("expression"))});
        }
        plan.required_observers = doc.value("required_observers", std::vector<std::string>{});
        for (const auto& n : doc.value("path_notes", nlohmann::json::array())) {
            plan.path_notes.push_back({n.at("path").get<Path>(),
                                       TimeLaw::make(n.at("mean").get<double>(), n.at("low").get<double>(),
                                                     n.at("high").get<double>())});
        }
        plan.unobserved_disambiguators = doc.value("unobserved_disambiguators", std::vector<std::string>{});
        if (plan.itm_bindings.empty()) throw PlanError("plan has no interaction-time bindings");
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw PlanError(std::string("malformed plan document: ") + e.what());
    }
}

std::string plan_summary(const SelfLabelingPlan& plan) {
    std::ostringstream os;
    os << "target " << plan.target_pair.first << " -> " << plan.target_pair.second << "\n";
    for (const auto& n : plan.path_notes) {
        os << "  path ";
        for (std::size_t i = 0; i < n.path.size(); ++i) os << (i ? " -> " : "") << n.path[i];
        os << "  mean=" << n.composed.mean << " [" << n.composed.low << ", " << n.composed.high << "]\n";
    }
    for (const auto& b : plan.itm_bindings) {
        const auto law = b.expression.evaluate();
        os << "  itm " << b.cause_id << "  mean=" << law.mean << " [" << law.low << ", " << law.high << "]\n";
    }
    os << "  observers:";
    for (const auto& o : plan.required_observers) os << ' ' << o;
    os << "\n";
    if (!plan.unobserved_disambiguators.empty()) {
        os << "  unobserved disambiguators:";
        for (const auto& o : plan.unobserved_disambiguators) os << ' ' << o;
        os << "\n";
    }
    return os.str();
}

}  // namespace slb::causal
