#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rei {

using NodeSet = std::set<std::string>;
using Edge = std::pair<std::string, std::string>;

// Immutable directed acyclic graph over named variables.
//
// Node order is the declaration order and drives every deterministic
// iteration in this module (neighbor scans, witness paths, topological
// order tie-breaks). Construction validates the graph; an instance that
// exists is always acyclic.
class Dag {
public:
    Dag() = default;

    // Throws DuplicateNodeError, UnknownNodeError, DuplicateEdgeError or
    // CycleError.
    Dag(std::vector<std::string> nodes, const std::vector<Edge>& edges);

    const std::vector<std::string>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t index_of(const std::string& name) const;
    const std::string& name(std::size_t i) const { return nodes_.at(i); }

    // Edges in declaration order of (parent, child) node indices.
    std::vector<Edge> edges() const;
    std::size_t edge_count() const;
    bool has_edge(const std::string& from, const std::string& to) const;

    // Indices, sorted ascending.
    const std::vector<std::size_t>& parent_indices(std::size_t i) const { return parents_.at(i); }
    const std::vector<std::size_t>& child_indices(std::size_t i) const { return children_.at(i); }
    const std::vector<std::size_t>& topological_order() const { return topo_; }

    // Parent names in node order.
    std::vector<std::string> parent_list(const std::string& node) const;

    friend bool operator==(const Dag& a, const Dag& b) {
        return a.nodes_ == b.nodes_ && a.parents_ == b.parents_;
    }

private:
    std::vector<std::string> nodes_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::size_t> topo_;
};

Dag build_dag(std::vector<std::string> nodes, const std::vector<Edge>& edges);

NodeSet parents(const Dag& g, const std::string& node);
NodeSet children(const Dag& g, const std::string& node);
NodeSet descendants(const Dag& g, const std::string& node);
NodeSet ancestors(const Dag& g, const NodeSet& nodes);

// Deletes every edge into `remove_incoming` and every edge out of
// `remove_outgoing`. The input graph is untouched.
Dag mutilate(const Dag& g, const NodeSet& remove_incoming, const NodeSet& remove_outgoing = {});

struct DSepVerdict {
    bool separated = true;
    // Present iff !separated. Consecutive entries are adjacent in the graph.
    std::optional<std::vector<std::string>> witness_path;
};

// d-separation of `x` and `y` given `z`, decided by Bayes-ball reachability.
// When the sets are d-connected the witness is the first active simple path
// in lexicographic order of node indices.
DSepVerdict d_separated(const Dag& g, const NodeSet& x, const NodeSet& y, const NodeSet& z);

// Renders a path with its edge directions, e.g. "y1 → x ← y2".
std::string format_path(const Dag& g, const std::vector<std::string>& path);

enum class Rule { Rule1, Rule2, Rule3 };

struct RuleOptions {
    // Rule 3 mutilates incoming edges of X ∪ Z by default. With this set,
    // only Z(W) is used: the members of Z that are not ancestors of any W
    // node in the graph with incoming edges of X removed.
    bool rule3_restrict_to_nonancestors = false;
};

struct RuleCheck {
    Rule rule = Rule::Rule1;
    bool applicable = false;
    std::size_t removed_incoming = 0;
    std::size_t removed_outgoing = 0;
    DSepVerdict verdict;
};

// Tests the graphical side condition of a do-calculus rule for
// p(y | do(x), z, w):
//   Rule1  (Y ⊥ Z | X, W) in G with edges into X removed
//   Rule2  (Y ⊥ Z | X, W) in G with edges into X and out of Z removed
//   Rule3  (Y ⊥ Z | X, W) in G with edges into X and Z removed
RuleCheck check_rule(const Dag& g, Rule rule, const NodeSet& x, const NodeSet& y,
                     const NodeSet& z, const NodeSet& w, RuleOptions options = {});

const char* rule_name(Rule rule);

// JSON: {"edges": [[parent, child], ...], "nodes": [...]} with keys and the
// edge list sorted so that load followed by save is byte-stable.
std::string dag_to_json(const Dag& g);
Dag dag_from_json(const std::string& text);
Dag load_dag(const std::filesystem::path& path);
void save_dag(const Dag& g, const std::filesystem::path& path);

}  // namespace rei
