#pragma once

// Exact inference over small discrete Bayesian networks. Everything here is
// brute force on dense tables: it is the ground truth that identification
// formulas are checked against, so clarity wins over speed.

#include <cstddef>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rei/dag.hpp"

namespace rei {

struct VarSpec {
    std::string name;
    std::size_t cardinality = 1;

    friend bool operator==(const VarSpec&, const VarSpec&) = default;
};

// Variable name → state index.
using Assignment = std::map<std::string, std::size_t>;

inline constexpr double kProbTolerance = 1e-12;

// p(child | parents). Rows enumerate parent states lexicographically (first
// parent most significant); each row holds `child_cardinality` entries.
struct Cpt {
    std::string child;
    std::vector<std::string> parents;
    std::size_t child_cardinality = 1;
    std::vector<double> table;

    std::size_t rows() const { return child_cardinality == 0 ? 0 : table.size() / child_cardinality; }
    double at(std::size_t row, std::size_t state) const { return table[row * child_cardinality + state]; }
};

class DiscreteModel {
public:
    DiscreteModel() = default;

    // `vars` may list the nodes in any order; they are stored in DAG node
    // order. Throws InvalidModel when the CPTs do not fit the DAG or a row
    // fails to normalize.
    DiscreteModel(Dag dag, std::vector<VarSpec> vars, std::map<std::string, Cpt> cpts);

    const Dag& dag() const { return dag_; }
    const std::vector<VarSpec>& vars() const { return vars_; }
    const std::map<std::string, Cpt>& cpts() const { return cpts_; }
    const Cpt& cpt(const std::string& node) const;
    std::size_t cardinality(const std::string& node) const;

private:
    Dag dag_;
    std::vector<VarSpec> vars_;
    std::map<std::string, Cpt> cpts_;
};

// Dense table over the full state space of `vars`, mixed-radix indexed with
// the first variable as the most significant digit.
class JointTable {
public:
    JointTable() = default;
    JointTable(std::vector<VarSpec> vars, std::vector<double> probs);

    const std::vector<VarSpec>& vars() const { return vars_; }
    const std::vector<double>& probs() const { return probs_; }
    std::size_t size() const { return probs_.size(); }

    // Position of a variable in `vars()`; throws UnknownNodeError.
    std::size_t position(const std::string& name) const;
    bool has_var(const std::string& name) const;

    std::size_t index(const std::vector<std::size_t>& states) const;
    std::vector<std::size_t> decode(std::size_t index) const;

    // Probability of a full assignment.
    double prob(const Assignment& full) const;
    double total() const;

private:
    std::vector<VarSpec> vars_;
    std::vector<double> probs_;
};

// p(effect | do(cause)); probs[cause_state * effect_cardinality + effect_state].
struct ConditionalTable {
    std::string cause;
    std::string effect;
    std::size_t cause_cardinality = 0;
    std::size_t effect_cardinality = 0;
    std::vector<double> probs;

    double at(std::size_t cause_state, std::size_t effect_state) const {
        return probs[cause_state * effect_cardinality + effect_state];
    }
};

inline constexpr std::size_t kMaxStateSpace = 10'000'000;

JointTable joint_from_model(const DiscreteModel& m, std::size_t max_cells = kMaxStateSpace);

// Sums out every variable not in `keep`; the result keeps the input order.
JointTable marginalize(const JointTable& t, const NodeSet& keep);

// Slice at the evidence, drop the evidence variables, renormalize.
JointTable condition(const JointTable& t, const Assignment& evidence);

// Truncated factorization: each intervened node's CPT becomes a point mass
// at its forced state. Intervened variables stay in the table, clamped.
JointTable intervene_truncated(const DiscreteModel& m, const Assignment& intervention);

// p(target | do(intervention), evidence) from the truncated factorization.
std::vector<double> interventional_conditional(const DiscreteModel& m, const Assignment& intervention,
                                               const Assignment& evidence, const std::string& target);

// p(effect | do(cause)) by the collider adjustment
//   Σ_{others} p(effect | cause, others) p(others)
// evaluated from the observational joint only. Requires a pure collider:
// every node other than `effect` is a root whose single edge points into
// `effect`. Throws NotAColliderError otherwise.
ConditionalTable adjust_collider(const DiscreteModel& m, const std::string& cause, const std::string& effect);

// Same quantity computed from intervene_truncated.
ConditionalTable truncated_effect(const DiscreteModel& m, const std::string& cause, const std::string& effect);

// p(latent | obs = obs_state, do(cause = cause_state)) evaluated as
//   p(obs | latent) · E_{p(other roots)}[p(latent | roots)] / p(obs | cause)
// from observational tables. The model must be roots → latent → obs with
// nothing else (ModelShapeError otherwise).
std::vector<double> interventional_posterior(const DiscreteModel& m, const std::string& cause,
                                             std::size_t cause_state, const std::string& obs,
                                             std::size_t obs_state, const std::string& latent);

// I(X; Y | Z) in nats.
double conditional_mutual_information(const JointTable& t, const NodeSet& x, const NodeSet& y,
                                      const NodeSet& z);

// Fills every CPT row with a draw from a flat Dirichlet.
DiscreteModel random_model(const Dag& dag, const std::map<std::string, std::size_t>& cardinalities,
                           std::mt19937_64& rng);

// {"cpts": {child: {"parents": [...], "rows": [[...], ...]}}, "dag": {...},
//  "vars": [{"cardinality": k, "name": ...}, ...]}
std::string model_to_json(const DiscreteModel& m);
DiscreteModel model_from_json(const std::string& text);
DiscreteModel load_model(const std::filesystem::path& path);
void save_model(const DiscreteModel& m, const std::filesystem::path& path);

}  // namespace rei
