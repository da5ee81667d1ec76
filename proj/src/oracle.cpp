#include "rei/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "rei/errors.hpp"

namespace rei {

namespace {

// Walks every full assignment in index order, keeping the digit vector and
// any number of projected sub-indices up to date incrementally.
class Odometer {
public:
    explicit Odometer(std::vector<std::size_t> radix) : radix_(std::move(radix)), digits_(radix_.size(), 0) {}

    // Registers a projection; `weights[i]` is the stride of digit i in the
    // projected index (0 when the variable is dropped).
    std::size_t add_projection(std::vector<std::size_t> weights) {
        weights_.push_back(std::move(weights));
        values_.push_back(0);
        return values_.size() - 1;
    }

    std::size_t value(std::size_t projection) const { return values_[projection]; }
    const std::vector<std::size_t>& digits() const { return digits_; }

    void advance() {
        for (std::size_t i = radix_.size(); i-- > 0;) {
            if (++digits_[i] < radix_[i]) {
                for (std::size_t p = 0; p < values_.size(); ++p) values_[p] += weights_[p][i];
                return;
            }
            for (std::size_t p = 0; p < values_.size(); ++p) values_[p] -= weights_[p][i] * (radix_[i] - 1);
            digits_[i] = 0;
        }
    }

private:
    std::vector<std::size_t> radix_;
    std::vector<std::size_t> digits_;
    std::vector<std::vector<std::size_t>> weights_;
    std::vector<std::size_t> values_;
};

std::vector<std::size_t> radix_of(const std::vector<VarSpec>& vars) {
    std::vector<std::size_t> r;
    for (const auto& v : vars) r.push_back(v.cardinality);
    return r;
}

std::size_t product(const std::vector<std::size_t>& r) {
    std::size_t n = 1;
    for (std::size_t k : r) n *= k;
    return n;
}

// Strides of the sub-table formed by `keep` (positions into vars, in order).
std::vector<std::size_t> projection_weights(const std::vector<VarSpec>& vars, const std::vector<std::size_t>& keep) {
    std::vector<std::size_t> w(vars.size(), 0);
    std::size_t stride = 1;
    for (std::size_t k = keep.size(); k-- > 0;) {
        w[keep[k]] = stride;
        stride *= vars[keep[k]].cardinality;
    }
    return w;
}

std::vector<std::size_t> positions_of(const JointTable& t, const NodeSet& names) {
    std::vector<std::size_t> out;
    for (const auto& n : names) out.push_back(t.position(n));
    std::sort(out.begin(), out.end());
    return out;
}

void check_row_normalized(const std::string& child, std::size_t row, const double* p, std::size_t k) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        if (!(p[j] >= 0.0 && p[j] <= 1.0)) {
            throw InvalidModel("CPT of '" + child + "' row " + std::to_string(row) + " has an entry outside [0,1]");
        }
        s += p[j];
    }
    if (std::abs(s - 1.0) > kProbTolerance) {
        throw InvalidModel("CPT of '" + child + "' row " + std::to_string(row) + " sums to " + std::to_string(s));
    }
}

}  // namespace

// ---------------------------------------------------------------- model

DiscreteModel::DiscreteModel(Dag dag, std::vector<VarSpec> vars, std::map<std::string, Cpt> cpts)
    : dag_(std::move(dag)), cpts_(std::move(cpts)) {
    if (vars.size() != dag_.size()) throw InvalidModel("vars must list every DAG node exactly once");
    vars_.resize(dag_.size());
    std::vector<bool> seen(dag_.size(), false);
    for (auto& v : vars) {
        const std::size_t i = dag_.index_of(v.name);
        if (seen[i]) throw InvalidModel("variable '" + v.name + "' listed twice");
        if (v.cardinality < 1) throw InvalidModel("variable '" + v.name + "' needs cardinality >= 1");
        seen[i] = true;
        vars_[i] = std::move(v);
    }
    for (const auto& node : dag_.nodes()) {
        auto it = cpts_.find(node);
        if (it == cpts_.end()) throw InvalidModel("missing CPT for '" + node + "'");
        Cpt& c = it->second;
        c.child = node;
        c.child_cardinality = cardinality(node);
        auto declared = c.parents;
        auto actual = dag_.parent_list(node);
        std::sort(declared.begin(), declared.end());
        std::sort(actual.begin(), actual.end());
        if (declared != actual) throw InvalidModel("CPT parents of '" + node + "' differ from the DAG parents");
        std::size_t rows = 1;
        for (const auto& p : c.parents) rows *= cardinality(p);
        if (c.table.size() != rows * c.child_cardinality) {
            throw InvalidModel("CPT of '" + node + "' has " + std::to_string(c.table.size()) + " entries, expected " +
                               std::to_string(rows * c.child_cardinality));
        }
        for (std::size_t r = 0; r < rows; ++r) {
            check_row_normalized(node, r, c.table.data() + r * c.child_cardinality, c.child_cardinality);
        }
    }
    if (cpts_.size() != dag_.size()) throw InvalidModel("CPT given for a node outside the DAG");
}

const Cpt& DiscreteModel::cpt(const std::string& node) const {
    auto it = cpts_.find(node);
    if (it == cpts_.end()) throw UnknownNodeError("unknown node '" + node + "'");
    return it->second;
}

std::size_t DiscreteModel::cardinality(const std::string& node) const {
    return vars_[dag_.index_of(node)].cardinality;
}

// ---------------------------------------------------------------- table

JointTable::JointTable(std::vector<VarSpec> vars, std::vector<double> probs)
    : vars_(std::move(vars)), probs_(std::move(probs)) {
    if (probs_.size() != product(radix_of(vars_))) throw ShapeMismatch("table size does not match variable cardinalities");
}

std::size_t JointTable::position(const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i].name == name) return i;
    }
    throw UnknownNodeError("variable '" + name + "' not in table");
}

bool JointTable::has_var(const std::string& name) const {
    return std::any_of(vars_.begin(), vars_.end(), [&](const VarSpec& v) { return v.name == name; });
}

std::size_t JointTable::index(const std::vector<std::size_t>& states) const {
    if (states.size() != vars_.size()) throw ShapeMismatch("assignment arity does not match table");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (states[i] >= vars_[i].cardinality) throw BadStateError("state out of range for '" + vars_[i].name + "'");
        idx = idx * vars_[i].cardinality + states[i];
    }
    return idx;
}

std::vector<std::size_t> JointTable::decode(std::size_t index) const {
    std::vector<std::size_t> s(vars_.size());
    for (std::size_t i = vars_.size(); i-- > 0;) {
        s[i] = index % vars_[i].cardinality;
        index /= vars_[i].cardinality;
    }
    return s;
}

double JointTable::prob(const Assignment& full) const {
    std::vector<std::size_t> s(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        auto it = full.find(vars_[i].name);
        if (it == full.end()) throw UnknownNodeError("assignment misses '" + vars_[i].name + "'");
        s[i] = it->second;
    }
    return probs_[index(s)];
}

double JointTable::total() const { return std::accumulate(probs_.begin(), probs_.end(), 0.0); }

// ---------------------------------------------------------------- operations

namespace {

JointTable product_of_cpts(const DiscreteModel& m, const Assignment& intervention, std::size_t max_cells) {
    const auto& vars = m.vars();
    const auto radix = radix_of(vars);
    double cells = 1.0;
    for (std::size_t r : radix) cells *= static_cast<double>(r);
    if (cells > static_cast<double>(max_cells)) {
        throw StateSpaceTooLarge("state space of " + std::to_string(static_cast<long double>(cells)) +
                                 " cells exceeds the limit of " + std::to_string(max_cells));
    }
    const std::size_t n = static_cast<std::size_t>(cells);

    // Per node: which CPT row a full assignment selects, as a projection.
    Odometer odo(radix);
    std::vector<const Cpt*> cpt(vars.size());
    std::vector<std::size_t> row_proj(vars.size());
    std::vector<long> forced(vars.size(), -1);
    for (std::size_t i = 0; i < vars.size(); ++i) {
        cpt[i] = &m.cpt(vars[i].name);
        std::vector<std::size_t> weights(vars.size(), 0);
        std::size_t stride = 1;
        for (std::size_t k = cpt[i]->parents.size(); k-- > 0;) {
            const std::size_t p = m.dag().index_of(cpt[i]->parents[k]);
            weights[p] = stride;
            stride *= vars[p].cardinality;
        }
        row_proj[i] = odo.add_projection(std::move(weights));
    }
    for (const auto& [name, state] : intervention) {
        const std::size_t i = m.dag().index_of(name);
        if (state >= vars[i].cardinality) throw BadStateError("state " + std::to_string(state) + " invalid for '" + name + "'");
        forced[i] = static_cast<long>(state);
    }

    std::vector<double> probs(n);
    for (std::size_t cell = 0; cell < n; ++cell, odo.advance()) {
        const auto& s = odo.digits();
        double p = 1.0;
        for (std::size_t i = 0; i < vars.size() && p != 0.0; ++i) {
            if (forced[i] >= 0) {
                p *= (static_cast<long>(s[i]) == forced[i]) ? 1.0 : 0.0;
            } else {
                p *= cpt[i]->at(odo.value(row_proj[i]), s[i]);
            }
        }
        probs[cell] = p;
    }
    return JointTable(vars, std::move(probs));
}

}  // namespace

JointTable joint_from_model(const DiscreteModel& m, std::size_t max_cells) {
    return product_of_cpts(m, {}, max_cells);
}

JointTable intervene_truncated(const DiscreteModel& m, const Assignment& intervention) {
    return product_of_cpts(m, intervention, kMaxStateSpace);
}

JointTable marginalize(const JointTable& t, const NodeSet& keep) {
    const auto keep_pos = positions_of(t, keep);
    std::vector<VarSpec> out_vars;
    for (std::size_t p : keep_pos) out_vars.push_back(t.vars()[p]);
    std::vector<double> out(product(radix_of(out_vars)), 0.0);
    Odometer odo(radix_of(t.vars()));
    const auto proj = odo.add_projection(projection_weights(t.vars(), keep_pos));
    for (std::size_t cell = 0; cell < t.size(); ++cell, odo.advance()) out[odo.value(proj)] += t.probs()[cell];
    return JointTable(std::move(out_vars), std::move(out));
}

JointTable condition(const JointTable& t, const Assignment& evidence) {
    std::vector<long> fixed(t.vars().size(), -1);
    for (const auto& [name, state] : evidence) {
        const std::size_t p = t.position(name);
        if (state >= t.vars()[p].cardinality) throw BadStateError("state " + std::to_string(state) + " invalid for '" + name + "'");
        fixed[p] = static_cast<long>(state);
    }
    std::vector<std::size_t> keep_pos;
    std::vector<VarSpec> out_vars;
    for (std::size_t i = 0; i < t.vars().size(); ++i) {
        if (fixed[i] < 0) {
            keep_pos.push_back(i);
            out_vars.push_back(t.vars()[i]);
        }
    }
    std::vector<double> out(product(radix_of(out_vars)), 0.0);
    Odometer odo(radix_of(t.vars()));
    const auto proj = odo.add_projection(projection_weights(t.vars(), keep_pos));
    for (std::size_t cell = 0; cell < t.size(); ++cell, odo.advance()) {
        const auto& s = odo.digits();
        bool match = true;
        for (std::size_t i = 0; i < s.size() && match; ++i) match = fixed[i] < 0 || static_cast<long>(s[i]) == fixed[i];
        if (match) out[odo.value(proj)] += t.probs()[cell];
    }
    const double mass = std::accumulate(out.begin(), out.end(), 0.0);
    if (!(mass > 0.0)) throw ZeroProbabilityEvidence("conditioning event has probability zero");
    for (double& p : out) p /= mass;
    return JointTable(std::move(out_vars), std::move(out));
}

std::vector<double> interventional_conditional(const DiscreteModel& m, const Assignment& intervention,
                                               const Assignment& evidence, const std::string& target) {
    const JointTable post = marginalize(condition(intervene_truncated(m, intervention), evidence), {target});
    return post.probs();
}

namespace {

void require_pure_collider(const DiscreteModel& m, const std::string& cause, const std::string& effect) {
    const Dag& g = m.dag();
    g.index_of(cause);
    g.index_of(effect);
    if (cause == effect) throw NotAColliderError("cause and effect must differ");
    const std::string prefix = "Rule 2 condition fails: '" + effect + "' is not a pure collider; ";
    if (!g.child_indices(g.index_of(effect)).empty()) {
        throw NotAColliderError(prefix + "'" + effect + "' has children");
    }
    for (const auto& node : g.nodes()) {
        if (node == effect) continue;
        const std::size_t i = g.index_of(node);
        if (!g.parent_indices(i).empty()) {
            throw NotAColliderError(prefix + "'" + node + "' has parents {" + [&] {
                std::string s;
                for (const auto& p : g.parent_list(node)) s += (s.empty() ? "" : ",") + p;
                return s;
            }() + "}");
        }
        const auto& ch = g.child_indices(i);
        if (ch.size() != 1 || g.name(ch[0]) != effect) {
            throw NotAColliderError(prefix + "'" + node + "' must have '" + effect + "' as its only child");
        }
    }
    // The adjustment in G with the cause's outgoing edges removed.
    NodeSet others;
    for (const auto& node : g.nodes()) {
        if (node != cause && node != effect) others.insert(node);
    }
    const auto rule = check_rule(g, Rule::Rule2, {}, {effect}, {cause}, others);
    if (!rule.applicable) throw NotAColliderError("Rule 2 condition fails for cause '" + cause + "'");
}

}  // namespace

ConditionalTable adjust_collider(const DiscreteModel& m, const std::string& cause, const std::string& effect) {
    require_pure_collider(m, cause, effect);
    const JointTable joint = joint_from_model(m);
    const auto& vars = joint.vars();
    const std::size_t ci = joint.position(cause);
    const std::size_t ei = joint.position(effect);
    std::vector<std::size_t> other_pos;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (i != ci && i != ei) other_pos.push_back(i);
    }
    const std::size_t kc = vars[ci].cardinality;
    const std::size_t ke = vars[ei].cardinality;

    // Observational marginals p(others), p(cause, others), p(effect, cause, others).
    std::vector<std::size_t> ca_pos = other_pos;
    ca_pos.insert(ca_pos.begin(), ci);
    std::sort(ca_pos.begin(), ca_pos.end());
    Odometer odo(radix_of(vars));
    const auto a_proj = odo.add_projection(projection_weights(vars, other_pos));
    std::vector<std::size_t> cause_w(vars.size(), 0), effect_w(vars.size(), 0);
    cause_w[ci] = 1;
    effect_w[ei] = 1;
    const auto c_proj = odo.add_projection(cause_w);
    const auto e_proj = odo.add_projection(effect_w);

    std::size_t na = 1;
    for (std::size_t p : other_pos) na *= vars[p].cardinality;
    std::vector<double> p_a(na, 0.0), p_ca(na * kc, 0.0), p_eca(na * kc * ke, 0.0);
    for (std::size_t cell = 0; cell < joint.size(); ++cell, odo.advance()) {
        const double p = joint.probs()[cell];
        const std::size_t a = odo.value(a_proj), c = odo.value(c_proj), e = odo.value(e_proj);
        p_a[a] += p;
        p_ca[c * na + a] += p;
        p_eca[(c * na + a) * ke + e] += p;
    }

    ConditionalTable out{cause, effect, kc, ke, std::vector<double>(kc * ke, 0.0)};
    for (std::size_t c = 0; c < kc; ++c) {
        for (std::size_t a = 0; a < na; ++a) {
            if (p_a[a] == 0.0) continue;
            const double denom = p_ca[c * na + a];
            if (!(denom > 0.0)) {
                throw ZeroProbabilityEvidence("p(" + cause + ", others) is zero where p(others) > 0; effect not identifiable");
            }
            for (std::size_t e = 0; e < ke; ++e) {
                out.probs[c * ke + e] += p_eca[(c * na + a) * ke + e] / denom * p_a[a];
            }
        }
    }
    return out;
}

ConditionalTable truncated_effect(const DiscreteModel& m, const std::string& cause, const std::string& effect) {
    const std::size_t kc = m.cardinality(cause);
    const std::size_t ke = m.cardinality(effect);
    ConditionalTable out{cause, effect, kc, ke, std::vector<double>(kc * ke, 0.0)};
    for (std::size_t c = 0; c < kc; ++c) {
        const JointTable t = marginalize(intervene_truncated(m, {{cause, c}}), {effect});
        for (std::size_t e = 0; e < ke; ++e) out.probs[c * ke + e] = t.probs()[e];
    }
    return out;
}

std::vector<double> interventional_posterior(const DiscreteModel& m, const std::string& cause,
                                             std::size_t cause_state, const std::string& obs,
                                             std::size_t obs_state, const std::string& latent) {
    const Dag& g = m.dag();
    const std::size_t li = g.index_of(latent);
    const std::size_t oi = g.index_of(obs);
    g.index_of(cause);
    if (g.parent_list(obs) != std::vector<std::string>{latent} || !g.child_indices(oi).empty()) {
        throw ModelShapeError("'" + obs + "' must be a sink whose only parent is '" + latent + "'");
    }
    if (g.child_indices(li).size() != 1) throw ModelShapeError("'" + latent + "' must have '" + obs + "' as its only child");
    NodeSet roots;
    for (const auto& node : g.nodes()) {
        if (node == obs || node == latent) continue;
        const std::size_t i = g.index_of(node);
        if (!g.parent_indices(i).empty()) throw ModelShapeError("factor '" + node + "' must be a root");
        for (std::size_t c : g.child_indices(i)) {
            if (c != li) throw ModelShapeError("factor '" + node + "' may only point into '" + latent + "'");
        }
        roots.insert(node);
    }
    if (!roots.count(cause)) throw ModelShapeError("cause '" + cause + "' must be one of the root factors");
    if (cause_state >= m.cardinality(cause)) throw BadStateError("invalid state for '" + cause + "'");
    if (obs_state >= m.cardinality(obs)) throw BadStateError("invalid state for '" + obs + "'");

    const JointTable joint = joint_from_model(m);

    // Denominator p(obs | cause): the exchanged form of p(obs, do(cause)).
    const JointTable co = marginalize(joint, {cause, obs});
    const double p_c = marginalize(co, {cause}).probs()[cause_state];
    const double p_co = co.prob({{cause, cause_state}, {obs, obs_state}});
    if (!(p_co > 0.0)) throw ZeroProbabilityEvidence("p(" + obs + ", " + cause + ") is zero");
    const double denominator = p_co / p_c;

    // p(obs | latent)
    const JointTable lo = marginalize(joint, {latent, obs});
    const JointTable l_only = marginalize(lo, {latent});
    const std::size_t kl = m.cardinality(latent);

    // E_{p(other roots)}[p(latent | roots)]
    NodeSet others = roots;
    others.erase(cause);
    NodeSet roots_latent = roots;
    roots_latent.insert(latent);
    const JointTable rl = marginalize(joint, roots_latent);
    const JointTable r = marginalize(joint, roots);
    const JointTable o = marginalize(joint, others);

    std::vector<double> mixture(kl, 0.0);
    for (std::size_t oc = 0; oc < o.size(); ++oc) {
        const double p_o = o.probs()[oc];
        if (p_o == 0.0) continue;
        Assignment a;
        const auto s = o.decode(oc);
        for (std::size_t i = 0; i < s.size(); ++i) a[o.vars()[i].name] = s[i];
        a[cause] = cause_state;
        const double p_r = r.prob(a);
        if (!(p_r > 0.0)) throw ZeroProbabilityEvidence("p(factors) is zero on the support of p(other factors)");
        for (std::size_t z = 0; z < kl; ++z) {
            a[latent] = z;
            mixture[z] += rl.prob(a) / p_r * p_o;
            a.erase(latent);
        }
    }

    std::vector<double> post(kl, 0.0);
    for (std::size_t z = 0; z < kl; ++z) {
        const double p_z = l_only.probs()[z];
        if (p_z == 0.0) continue;
        const double lik = lo.prob({{latent, z}, {obs, obs_state}}) / p_z;
        post[z] = lik * mixture[z] / denominator;
    }
    return post;
}

double conditional_mutual_information(const JointTable& t, const NodeSet& x, const NodeSet& y, const NodeSet& z) {
    for (const auto& n : x) {
        if (y.count(n) || z.count(n)) throw OverlapError("node '" + n + "' appears in more than one set");
    }
    for (const auto& n : y) {
        if (z.count(n)) throw OverlapError("node '" + n + "' appears in more than one set");
    }
    const auto xp = positions_of(t, x);
    const auto yp = positions_of(t, y);
    const auto zp = positions_of(t, z);
    auto merge = [](std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
        a.insert(a.end(), b.begin(), b.end());
        std::sort(a.begin(), a.end());
        return a;
    };
    const auto xz = merge(xp, zp);
    const auto yz = merge(yp, zp);
    const auto xyz = merge(xz, yp);

    auto table_size = [&](const std::vector<std::size_t>& pos) {
        std::size_t n = 1;
        for (std::size_t p : pos) n *= t.vars()[p].cardinality;
        return n;
    };
    std::vector<double> p_xyz(table_size(xyz), 0.0), p_xz(table_size(xz), 0.0), p_yz(table_size(yz), 0.0),
        p_z(table_size(zp), 0.0);
    Odometer odo(radix_of(t.vars()));
    const auto a = odo.add_projection(projection_weights(t.vars(), xyz));
    const auto b = odo.add_projection(projection_weights(t.vars(), xz));
    const auto c = odo.add_projection(projection_weights(t.vars(), yz));
    const auto d = odo.add_projection(projection_weights(t.vars(), zp));
    // Each xyz cell maps to unique xz, yz, z cells; remember them.
    std::vector<std::size_t> to_xz(p_xyz.size()), to_yz(p_xyz.size()), to_z(p_xyz.size());
    for (std::size_t cell = 0; cell < t.size(); ++cell, odo.advance()) {
        const double p = t.probs()[cell];
        const std::size_t i = odo.value(a);
        p_xyz[i] += p;
        p_xz[odo.value(b)] += p;
        p_yz[odo.value(c)] += p;
        p_z[odo.value(d)] += p;
        to_xz[i] = odo.value(b);
        to_yz[i] = odo.value(c);
        to_z[i] = odo.value(d);
    }
    double cmi = 0.0;
    for (std::size_t i = 0; i < p_xyz.size(); ++i) {
        const double p = p_xyz[i];
        if (p <= 0.0) continue;
        cmi += p * std::log(p * p_z[to_z[i]] / (p_xz[to_xz[i]] * p_yz[to_yz[i]]));
    }
    return std::max(cmi, 0.0);
}

DiscreteModel random_model(const Dag& dag, const std::map<std::string, std::size_t>& cardinalities,
                           std::mt19937_64& rng) {
    std::vector<VarSpec> vars;
    for (const auto& node : dag.nodes()) {
        auto it = cardinalities.find(node);
        if (it == cardinalities.end()) throw UnknownNodeError("no cardinality for '" + node + "'");
        vars.push_back({node, it->second});
    }
    std::exponential_distribution<double> gamma1(1.0);  // Gamma(1) draws normalize to a flat Dirichlet
    std::map<std::string, Cpt> cpts;
    for (const auto& node : dag.nodes()) {
        Cpt c;
        c.child = node;
        c.parents = dag.parent_list(node);
        c.child_cardinality = cardinalities.at(node);
        std::size_t rows = 1;
        for (const auto& p : c.parents) rows *= cardinalities.at(p);
        c.table.resize(rows * c.child_cardinality);
        for (std::size_t r = 0; r < rows; ++r) {
            double* row = c.table.data() + r * c.child_cardinality;
            double s = 0.0;
            for (std::size_t j = 0; j < c.child_cardinality; ++j) s += (row[j] = gamma1(rng));
            for (std::size_t j = 0; j < c.child_cardinality; ++j) row[j] /= s;
        }
        cpts.emplace(node, std::move(c));
    }
    return DiscreteModel(dag, std::move(vars), std::move(cpts));
}

// ---------------------------------------------------------------- json

std::string model_to_json(const DiscreteModel& m) {
    nlohmann::json j;
    j["dag"] = nlohmann::json::parse(dag_to_json(m.dag()));
    j["vars"] = nlohmann::json::array();
    for (const auto& v : m.vars()) j["vars"].push_back({{"name", v.name}, {"cardinality", v.cardinality}});
    j["cpts"] = nlohmann::json::object();
    for (const auto& [child, c] : m.cpts()) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < c.rows(); ++r) {
            rows.push_back(std::vector<double>(c.table.begin() + static_cast<long>(r * c.child_cardinality),
                                               c.table.begin() + static_cast<long>((r + 1) * c.child_cardinality)));
        }
        j["cpts"][child] = {{"parents", c.parents}, {"rows", rows}};
    }
    return j.dump(2) + "\n";
}

DiscreteModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        for (const auto& [key, _] : j.items()) {
            if (key != "dag" && key != "vars" && key != "cpts") throw FormatError("unknown key '" + key + "' in model file");
        }
        Dag dag = dag_from_json(j.at("dag").dump());
        std::vector<VarSpec> vars;
        for (const auto& v : j.at("vars")) vars.push_back({v.at("name").get<std::string>(), v.at("cardinality").get<std::size_t>()});
        std::map<std::string, Cpt> cpts;
        for (const auto& [child, body] : j.at("cpts").items()) {
            Cpt c;
            c.child = child;
            c.parents = body.at("parents").get<std::vector<std::string>>();
            std::size_t width = 0;
            for (const auto& v : vars) {
                if (v.name == child) width = v.cardinality;
            }
            for (const auto& row : body.at("rows")) {
                if (row.size() != width) throw FormatError("CPT row of '" + child + "' must have one entry per state");
                for (const auto& p : row) c.table.push_back(p.get<double>());
            }
            cpts.emplace(child, std::move(c));
        }
        return DiscreteModel(std::move(dag), std::move(vars), std::move(cpts));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    }
}

DiscreteModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open model file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

void save_model(const DiscreteModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write model file '" + path.string() + "'");
    out << model_to_json(m);
}

}  // namespace rei
