#include "rei/dag.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rei/errors.hpp"

namespace rei {

namespace {

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

std::vector<std::size_t> indices_of(const Dag& g, const NodeSet& set) {
    std::vector<std::size_t> out;
    out.reserve(set.size());
    for (const auto& name : set) out.push_back(g.index_of(name));
    return sorted_unique(std::move(out));
}

void require_disjoint(const NodeSet& a, const NodeSet& b, const char* what) {
    for (const auto& n : a) {
        if (b.count(n)) throw OverlapError(std::string("node '") + n + "' appears in both " + what);
    }
}

}  // namespace

Dag::Dag(std::vector<std::string> nodes, const std::vector<Edge>& edges) : nodes_(std::move(nodes)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].empty()) throw UnknownNodeError("node names must be nonempty");
        if (!index_.emplace(nodes_[i], i).second) throw DuplicateNodeError("duplicate node '" + nodes_[i] + "'");
    }
    parents_.assign(nodes_.size(), {});
    children_.assign(nodes_.size(), {});
    for (const auto& [from, to] : edges) {
        auto pf = index_.find(from);
        auto pt = index_.find(to);
        if (pf == index_.end()) throw UnknownNodeError("edge references undeclared node '" + from + "'");
        if (pt == index_.end()) throw UnknownNodeError("edge references undeclared node '" + to + "'");
        if (pf->second == pt->second) throw CycleError("self-loop on '" + from + "'");
        auto& ch = children_[pf->second];
        if (std::find(ch.begin(), ch.end(), pt->second) != ch.end()) {
            throw DuplicateEdgeError("duplicate edge " + from + " -> " + to);
        }
        ch.push_back(pt->second);
        parents_[pt->second].push_back(pf->second);
    }
    for (auto& v : parents_) std::sort(v.begin(), v.end());
    for (auto& v : children_) std::sort(v.begin(), v.end());

    // Kahn's algorithm; smallest ready index first.
    std::vector<std::size_t> indegree(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) indegree[i] = parents_[i].size();
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (indegree[i] == 0) ready.insert(i);
    }
    while (!ready.empty()) {
        std::size_t v = *ready.begin();
        ready.erase(ready.begin());
        topo_.push_back(v);
        for (std::size_t c : children_[v]) {
            if (--indegree[c] == 0) ready.insert(c);
        }
    }
    if (topo_.size() != nodes_.size()) {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (indegree[i] > 0) throw CycleError("edges induce a directed cycle through '" + nodes_[i] + "'");
        }
    }
}

std::size_t Dag::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownNodeError("unknown node '" + name + "'");
    return it->second;
}

std::vector<Edge> Dag::edges() const {
    std::vector<Edge> out;
    for (std::size_t p = 0; p < nodes_.size(); ++p) {
        for (std::size_t c : children_[p]) out.emplace_back(nodes_[p], nodes_[c]);
    }
    return out;
}

std::size_t Dag::edge_count() const {
    std::size_t n = 0;
    for (const auto& c : children_) n += c.size();
    return n;
}

bool Dag::has_edge(const std::string& from, const std::string& to) const {
    const auto& ch = children_[index_of(from)];
    return std::binary_search(ch.begin(), ch.end(), index_of(to));
}

std::vector<std::string> Dag::parent_list(const std::string& node) const {
    std::vector<std::string> out;
    for (std::size_t p : parents_[index_of(node)]) out.push_back(nodes_[p]);
    return out;
}

Dag build_dag(std::vector<std::string> nodes, const std::vector<Edge>& edges) {
    return Dag(std::move(nodes), edges);
}

NodeSet parents(const Dag& g, const std::string& node) {
    NodeSet out;
    for (std::size_t p : g.parent_indices(g.index_of(node))) out.insert(g.name(p));
    return out;
}

NodeSet children(const Dag& g, const std::string& node) {
    NodeSet out;
    for (std::size_t c : g.child_indices(g.index_of(node))) out.insert(g.name(c));
    return out;
}

NodeSet descendants(const Dag& g, const std::string& node) {
    const std::size_t start = g.index_of(node);
    std::vector<bool> seen(g.size(), false);
    std::vector<std::size_t> stack{start};
    NodeSet out;
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t c : g.child_indices(v)) {
            if (!seen[c]) {
                seen[c] = true;
                out.insert(g.name(c));
                stack.push_back(c);
            }
        }
    }
    return out;
}

NodeSet ancestors(const Dag& g, const NodeSet& nodes) {
    std::vector<bool> seen(g.size(), false);
    std::vector<std::size_t> stack;
    for (std::size_t i : indices_of(g, nodes)) {
        seen[i] = true;
        stack.push_back(i);
    }
    while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t p : g.parent_indices(v)) {
            if (!seen[p]) {
                seen[p] = true;
                stack.push_back(p);
            }
        }
    }
    NodeSet out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (seen[i]) out.insert(g.name(i));
    }
    return out;
}

Dag mutilate(const Dag& g, const NodeSet& remove_incoming, const NodeSet& remove_outgoing) {
    for (const auto& n : remove_incoming) g.index_of(n);
    for (const auto& n : remove_outgoing) g.index_of(n);
    std::vector<Edge> kept;
    for (auto& e : g.edges()) {
        if (remove_incoming.count(e.second) || remove_outgoing.count(e.first)) continue;
        kept.push_back(std::move(e));
    }
    return Dag(g.nodes(), kept);
}

namespace {

// Bayes-ball traversal state: a node together with the direction the ball
// arrived from. `kUp` means it came from a child (travelling against edge
// direction), `kDown` means it came from a parent.
enum Dir : std::size_t { kUp = 0, kDown = 1 };

struct BallContext {
    const Dag& g;
    std::vector<bool> in_z;
    std::vector<bool> z_ancestor;  // node is in Z or has a descendant in Z

    BallContext(const Dag& graph, const NodeSet& z) : g(graph), in_z(graph.size()), z_ancestor(graph.size()) {
        for (std::size_t i : indices_of(g, z)) in_z[i] = true;
        for (const auto& a : ancestors(g, z)) z_ancestor[g.index_of(a)] = true;
    }

    // Successor states of (v, dir) under the blocking rules.
    template <class F>
    void for_each_next(std::size_t v, Dir dir, F&& f) const {
        if (dir == kUp) {
            if (in_z[v]) return;
            for (std::size_t p : g.parent_indices(v)) f(p, kUp);
            for (std::size_t c : g.child_indices(v)) f(c, kDown);
        } else {
            if (!in_z[v]) {
                for (std::size_t c : g.child_indices(v)) f(c, kDown);
            }
            if (z_ancestor[v]) {
                for (std::size_t p : g.parent_indices(v)) f(p, kUp);
            }
        }
    }
};

std::size_t state_id(std::size_t v, Dir d) { return 2 * v + d; }

// Marks every state from which a ball can reach some target node.
std::vector<bool> states_reaching(const BallContext& ctx, const std::vector<bool>& target) {
    const std::size_t n = ctx.g.size();
    // Reverse edges of the state graph.
    std::vector<std::vector<std::size_t>> rev(2 * n);
    for (std::size_t v = 0; v < n; ++v) {
        for (Dir d : {kUp, kDown}) {
            ctx.for_each_next(v, d, [&](std::size_t w, Dir e) { rev[state_id(w, e)].push_back(state_id(v, d)); });
        }
    }
    std::vector<bool> good(2 * n, false);
    std::deque<std::size_t> queue;
    for (std::size_t v = 0; v < n; ++v) {
        if (!target[v]) continue;
        for (Dir d : {kUp, kDown}) {
            good[state_id(v, d)] = true;
            queue.push_back(state_id(v, d));
        }
    }
    while (!queue.empty()) {
        std::size_t s = queue.front();
        queue.pop_front();
        for (std::size_t r : rev[s]) {
            if (!good[r]) {
                good[r] = true;
                queue.push_back(r);
            }
        }
    }
    return good;
}

}  // namespace

DSepVerdict d_separated(const Dag& g, const NodeSet& x, const NodeSet& y, const NodeSet& z) {
    require_disjoint(x, y, "x and y");
    require_disjoint(x, z, "x and z");
    require_disjoint(y, z, "y and z");
    const auto xs = indices_of(g, x);
    const auto ys = indices_of(g, y);
    indices_of(g, z);
    if (xs.empty() || ys.empty()) return {};

    BallContext ctx(g, z);
    std::vector<bool> is_y(g.size(), false), is_x(g.size(), false);
    for (std::size_t i : ys) is_y[i] = true;
    for (std::size_t i : xs) is_x[i] = true;

    // Reachability from X.
    std::vector<bool> visited(2 * g.size(), false);
    std::deque<std::pair<std::size_t, Dir>> queue;
    for (std::size_t s : xs) {
        visited[state_id(s, kUp)] = true;
        queue.emplace_back(s, kUp);
    }
    bool reached = false;
    while (!queue.empty() && !reached) {
        auto [v, d] = queue.front();
        queue.pop_front();
        ctx.for_each_next(v, d, [&](std::size_t w, Dir e) {
            if (is_y[w]) reached = true;
            if (!visited[state_id(w, e)]) {
                visited[state_id(w, e)] = true;
                queue.emplace_back(w, e);
            }
        });
    }
    if (!reached) return {};

    // Witness: depth-first over simple paths in index order, pruned to states
    // that can still reach Y.
    const auto good = states_reaching(ctx, is_y);
    std::vector<std::size_t> path;
    std::vector<bool> on_path(g.size(), false);
    std::optional<std::vector<std::size_t>> found;

    auto dfs = [&](auto&& self, std::size_t v, Dir d) -> bool {
        std::vector<std::pair<std::size_t, Dir>> next;
        ctx.for_each_next(v, d, [&](std::size_t w, Dir e) { next.emplace_back(w, e); });
        std::sort(next.begin(), next.end());
        for (auto [w, e] : next) {
            if (on_path[w] || is_x[w] || !good[state_id(w, e)]) continue;
            path.push_back(w);
            if (is_y[w]) {
                found = path;
                return true;
            }
            on_path[w] = true;
            if (self(self, w, e)) return true;
            on_path[w] = false;
            path.pop_back();
        }
        return false;
    };
    for (std::size_t s : xs) {
        path.assign(1, s);
        on_path.assign(g.size(), false);
        on_path[s] = true;
        if (dfs(dfs, s, kUp)) break;
    }
    DSepVerdict verdict;
    verdict.separated = false;
    std::vector<std::string> names;
    if (found) {
        for (std::size_t i : *found) names.push_back(g.name(i));
    }
    verdict.witness_path = std::move(names);
    return verdict;
}

std::string format_path(const Dag& g, const std::vector<std::string>& path) {
    std::ostringstream os;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i > 0) os << (g.has_edge(path[i - 1], path[i]) ? " → " : " ← ");
        os << path[i];
    }
    return os.str();
}

const char* rule_name(Rule rule) {
    switch (rule) {
        case Rule::Rule1: return "Rule1";
        case Rule::Rule2: return "Rule2";
        case Rule::Rule3: return "Rule3";
    }
    return "?";
}

RuleCheck check_rule(const Dag& g, Rule rule, const NodeSet& x, const NodeSet& y, const NodeSet& z,
                     const NodeSet& w, RuleOptions options) {
    require_disjoint(x, y, "x and y");
    require_disjoint(x, z, "x and z");
    require_disjoint(x, w, "x and w");
    require_disjoint(y, z, "y and z");
    require_disjoint(y, w, "y and w");
    require_disjoint(z, w, "z and w");

    NodeSet incoming = x;
    NodeSet outgoing;
    switch (rule) {
        case Rule::Rule1: break;
        case Rule::Rule2: outgoing = z; break;
        case Rule::Rule3:
            if (options.rule3_restrict_to_nonancestors) {
                const NodeSet anc_w = ancestors(mutilate(g, x), w);
                for (const auto& n : z) {
                    if (!anc_w.count(n)) incoming.insert(n);
                }
            } else {
                incoming.insert(z.begin(), z.end());
            }
            break;
    }
    const Dag mutilated = mutilate(g, incoming, outgoing);

    RuleCheck check;
    check.rule = rule;
    for (const auto& [from, to] : g.edges()) {
        if (incoming.count(to)) {
            ++check.removed_incoming;
        } else if (outgoing.count(from)) {
            ++check.removed_outgoing;
        }
    }
    NodeSet cond = x;
    cond.insert(w.begin(), w.end());
    check.verdict = d_separated(mutilated, y, z, cond);
    check.applicable = check.verdict.separated;
    return check;
}

std::string dag_to_json(const Dag& g) {
    auto edges = g.edges();
    std::sort(edges.begin(), edges.end());
    nlohmann::json j;
    j["nodes"] = g.nodes();
    j["edges"] = nlohmann::json::array();
    for (const auto& [p, c] : edges) j["edges"].push_back({p, c});
    return j.dump(2) + "\n";
}

Dag dag_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("DAG file is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("nodes") || !j.contains("edges")) {
        throw FormatError("DAG file must be an object with 'nodes' and 'edges'");
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "nodes" && key != "edges") throw FormatError("unknown key '" + key + "' in DAG file");
    }
    try {
        auto nodes = j.at("nodes").get<std::vector<std::string>>();
        std::vector<Edge> edges;
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) throw FormatError("each edge must be a [parent, child] pair");
            edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
        }
        return Dag(std::move(nodes), edges);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed DAG file: ") + e.what());
    }
}

Dag load_dag(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open DAG file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return dag_from_json(ss.str());
}

void save_dag(const Dag& g, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write DAG file '" + path.string() + "'");
    out << dag_to_json(g);
}

}  // namespace rei
