#pragma once

// Randomized input generators and applications for every autodiff primitive,
// shared by the unit tests and the acceptance suite.

#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "rei/autodiff.hpp"

namespace rei::testing {

using ad::Matrix;
using ad::Tape;
using ad::Var;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

// Pushes entries at least `gap` away from `kink` so finite differences do not straddle it.
inline Matrix away_from(Matrix m, double kink, double gap) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double& v = m.data()[i];
        if (std::abs(v - kink) < gap) v = kink + (v >= kink ? gap : -gap);
    }
    return m;
}

struct OpCase {
    const char* name;
    // Builds the inputs for one trial.
    std::function<std::vector<Matrix>(std::mt19937_64&)> inputs;
    std::function<Var(Tape&, const std::vector<Var>&)> apply;
};

inline std::vector<OpCase> op_cases() {
    auto dims = [](std::mt19937_64& rng) {
        std::uniform_int_distribution<Eigen::Index> d(1, 4);
        return std::pair{d(rng), d(rng)};
    };
    std::vector<OpCase> cases;
    auto same2 = [dims](std::mt19937_64& rng) {
        auto [r, c] = dims(rng);
        return std::vector<Matrix>{random_matrix(rng, r, c), random_matrix(rng, r, c)};
    };
    auto bcast2 = [dims](std::mt19937_64& rng) {
        auto [r, c] = dims(rng);
        return std::vector<Matrix>{random_matrix(rng, r + 1, c), random_matrix(rng, 1, c)};
    };
    auto one = [dims](std::mt19937_64& rng) {
        auto [r, c] = dims(rng);
        return std::vector<Matrix>{random_matrix(rng, r, c, -2.0, 2.0)};
    };
    cases.push_back({"add", same2, [](Tape&, const std::vector<Var>& v) { return ad::add(v[0], v[1]); }});
    cases.push_back({"add_broadcast", bcast2, [](Tape&, const std::vector<Var>& v) { return ad::add(v[1], v[0]); }});
    cases.push_back({"sub", same2, [](Tape&, const std::vector<Var>& v) { return ad::sub(v[0], v[1]); }});
    cases.push_back({"sub_broadcast", bcast2, [](Tape&, const std::vector<Var>& v) { return ad::sub(v[0], v[1]); }});
    cases.push_back({"mul", same2, [](Tape&, const std::vector<Var>& v) { return ad::mul(v[0], v[1]); }});
    cases.push_back({"mul_broadcast", bcast2, [](Tape&, const std::vector<Var>& v) { return ad::mul(v[0], v[1]); }});
    cases.push_back({"scale", one, [](Tape&, const std::vector<Var>& v) { return ad::scale(v[0], -1.7); }});
    cases.push_back({"add_scalar", one, [](Tape&, const std::vector<Var>& v) { return ad::add_scalar(v[0], 0.3); }});
    cases.push_back({"neg", one, [](Tape&, const std::vector<Var>& v) { return ad::neg(v[0]); }});
    cases.push_back({"matmul",
                     [](std::mt19937_64& rng) {
                         std::uniform_int_distribution<Eigen::Index> d(1, 4);
                         const auto n = d(rng), k = d(rng), m = d(rng);
                         return std::vector<Matrix>{random_matrix(rng, n, k), random_matrix(rng, k, m)};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }});
    cases.push_back({"relu",
                     [dims](std::mt19937_64& rng) {
                         auto [r, c] = dims(rng);
                         return std::vector<Matrix>{away_from(random_matrix(rng, r, c), 0.0, 1e-3)};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::relu(v[0]); }});
    cases.push_back({"exp", one, [](Tape&, const std::vector<Var>& v) { return ad::exp(v[0]); }});
    cases.push_back({"log",
                     [dims](std::mt19937_64& rng) {
                         auto [r, c] = dims(rng);
                         return std::vector<Matrix>{random_matrix(rng, r, c, 0.2, 3.0)};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::log(v[0]); }});
    cases.push_back({"square", one, [](Tape&, const std::vector<Var>& v) { return ad::square(v[0]); }});
    cases.push_back({"softplus",
                     [dims](std::mt19937_64& rng) {
                         auto [r, c] = dims(rng);
                         return std::vector<Matrix>{random_matrix(rng, r, c, -30.0, 30.0)};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::softplus(v[0]); }});
    cases.push_back({"tanh", one, [](Tape&, const std::vector<Var>& v) { return ad::tanh(v[0]); }});
    cases.push_back({"clamp",
                     [dims](std::mt19937_64& rng) {
                         auto [r, c] = dims(rng);
                         return std::vector<Matrix>{away_from(away_from(random_matrix(rng, r, c, -2.0, 2.0), -1.0, 1e-3), 1.0, 1e-3)};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::clamp(v[0], -1.0, 1.0); }});
    cases.push_back({"sum", one, [](Tape&, const std::vector<Var>& v) { return ad::sum(v[0]); }});
    cases.push_back({"mean", one, [](Tape&, const std::vector<Var>& v) { return ad::mean(v[0]); }});
    cases.push_back({"sum_cols", one, [](Tape&, const std::vector<Var>& v) { return ad::sum_cols(v[0]); }});
    cases.push_back({"logsumexp_cols",
                     [dims](std::mt19937_64& rng) {
                         auto [r, c] = dims(rng);
                         return std::vector<Matrix>{random_matrix(rng, r, c, -20.0, 20.0)};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::logsumexp_cols(v[0]); }});
    cases.push_back({"broadcast_rows",
                     [dims](std::mt19937_64& rng) {
                         auto [r, c] = dims(rng);
                         return std::vector<Matrix>{random_matrix(rng, 1, c + r)};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::broadcast_rows(v[0], 3); }});
    cases.push_back({"repeat_rows", one, [](Tape&, const std::vector<Var>& v) { return ad::repeat_rows(v[0], 3); }});
    cases.push_back({"slice_cols", one, [](Tape&, const std::vector<Var>& v) {
                         return ad::slice_cols(v[0], v[0].cols() / 2, v[0].cols() - v[0].cols() / 2);
                     }});
    cases.push_back({"slice_rows", one, [](Tape&, const std::vector<Var>& v) {
                         return ad::slice_rows(v[0], v[0].rows() / 2, v[0].rows() - v[0].rows() / 2);
                     }});
    cases.push_back({"concat_cols",
                     [dims](std::mt19937_64& rng) {
                         auto [r, c] = dims(rng);
                         return std::vector<Matrix>{random_matrix(rng, r, c), random_matrix(rng, r, c + 1), random_matrix(rng, r, 1)};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::concat_cols(v); }});
    cases.push_back({"reshape",
                     [](std::mt19937_64& rng) {
                         std::uniform_int_distribution<Eigen::Index> d(1, 4);
                         return std::vector<Matrix>{random_matrix(rng, 2 * d(rng), d(rng))};
                     },
                     [](Tape&, const std::vector<Var>& v) { return ad::reshape(v[0], v[0].rows() / 2, v[0].cols() * 2); }});
    return cases;
}

}  // namespace rei::testing
