#pragma once

// Causal graphs with interaction-time laws on their edges, and the
// composition of those laws into a self-labeling plan.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace slb::causal {

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PlanError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class StateKind { steady, transient };

const char* to_string(StateKind k);
StateKind parse_state_kind(const std::string& s);

/// Interval-valued causal time lag, in time units.
struct TimeLaw {
    double mean = 0.0;
    double low = 0.0;
    double high = 0.0;

    /// Throws std::invalid_argument unless 0 <= low <= mean <= high.
    static TimeLaw make(double mean, double low, double high);
    static TimeLaw exact(double t) { return make(t, t, t); }

    bool operator==(const TimeLaw&) const = default;
};

/// Lags along a chain add up, endpoint by endpoint.
TimeLaw chain_time(const TimeLaw& first, const TimeLaw& second);

/// Window that covers every lag in a fork: component-wise maximum.
TimeLaw fork_time(std::span<const TimeLaw> times);

struct CausalNode {
    std::string id;
    bool observable = true;
    std::optional<StateKind> state_kind;
};

struct CausalEdge {
    std::string cause;
    std::string effect;
    TimeLaw law;
};

using Path = std::vector<std::string>;

/// Immutable DAG. The constructor rejects duplicate ids, dangling edges,
/// cycles, and cause nodes without a state kind.
class CausalGraph {
public:
    CausalGraph(std::vector<CausalNode> nodes, std::vector<CausalEdge> edges);

    const std::vector<CausalNode>& nodes() const { return nodes_; }
    const std::vector<CausalEdge>& edges() const { return edges_; }

    bool has_node(const std::string& id) const { return index_.count(id) != 0; }
    const CausalNode& node(const std::string& id) const;
    const CausalEdge* find_edge(const std::string& cause, const std::string& effect) const;
    std::vector<std::string> parents(const std::string& id) const;
    std::vector<std::string> children(const std::string& id) const;
    bool reaches(const std::string& from, const std::string& to) const;

    /// Every directed path from `from` to `to`, in depth-first order
    /// following edge insertion order.
    std::vector<Path> all_paths(const std::string& from, const std::string& to) const;

    /// Chain composition of the edge laws along a path.
    TimeLaw path_law(const Path& path) const;

private:
    std::vector<CausalNode> nodes_;
    std::vector<CausalEdge> edges_;
    std::map<std::string, std::size_t> index_;
    std::vector<std::vector<std::size_t>> out_edges_;
};

CausalGraph graph_from_json(const nlohmann::json& doc);
nlohmann::json graph_to_json(const CausalGraph& g);

enum class Structure { chain, fork, collider, confounder, other };

const char* to_string(Structure s);

/// Names the basic structure induced by three nodes. Throws GraphError when a
/// node is missing or the induced subgraph is disconnected.
Structure classify_structure(const CausalGraph& g, const std::array<std::string, 3>& ids);

/// Expression tree over edge laws with SUM (chain) and MAX (fork) nodes.
class TimeExpression {
public:
    enum class Op { edge, sum, max };

    static TimeExpression edge(std::string cause, std::string effect, TimeLaw law);
    static TimeExpression sum(std::vector<TimeExpression> terms);
    static TimeExpression max(std::vector<TimeExpression> terms);

    Op op() const { return op_; }
    const std::vector<TimeExpression>& terms() const { return terms_; }
    TimeLaw evaluate() const;
    nlohmann::json to_json() const;

private:
    Op op_ = Op::edge;
    std::string cause_;
    std::string effect_;
    TimeLaw law_;
    std::vector<TimeExpression> terms_;
};

struct ItmBinding {
    std::string cause_id;
    TimeExpression expression;
};

struct PathNote {
    Path path;
    TimeLaw composed;
};

struct SelfLabelingPlan {
    std::pair<std::string, std::string> target_pair;
    std::vector<ItmBinding> itm_bindings;
    std::vector<std::string> required_observers;
    std::vector<PathNote> path_notes;
    /// Intermediate nodes that would disambiguate parallel paths but carry no
    /// sensor; a single interaction-time model must then cover both paths.
    std::vector<std::string> unobserved_disambiguators;
};

/// Decomposes the graph around (cause, effect): composes every directed
/// path, binds one interaction-time model to the cause and one to each other
/// transient parent of the effect that is not downstream of the cause, and
/// lists the observers needed to tell parallel paths apart.
SelfLabelingPlan build_labeling_plan(const CausalGraph& g, const std::string& cause, const std::string& effect);

nlohmann::json plan_to_json(const SelfLabelingPlan& plan);
/// Inverse of plan_to_json. Throws PlanError on malformed documents.
SelfLabelingPlan plan_from_json(const nlohmann::json& doc);
TimeExpression expression_from_json(const nlohmann::json& doc);

/// Human-readable lines: one per path, one per binding.
std::string plan_summary(const SelfLabelingPlan& plan);

}  // namespace slb::causal
