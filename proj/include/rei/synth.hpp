#pragma once

// Synthetic collider data: factors y (optionally correlated by a Gaussian
// rejection kernel) and a nuisance u both feed the observation x.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rei/oracle.hpp"

namespace rei::synth {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CorrPair {
    std::size_t i = 0;
    std::size_t j = 0;
    double sigma = 0.1;
};

struct OneToAll {
    std::size_t i = 0;
    double sigma = 0.2;
};

// How discretize_to_model collapses the factors into one discrete x.
enum class DiscreteRender { Sum, Or, Index };

struct GenSpec {
    std::size_t n_factors = 1;
    // States per factor; 0 marks a continuous factor. Empty means all continuous.
    std::vector<std::size_t> factor_levels;
    std::vector<CorrPair> corr_pairs;
    std::optional<OneToAll> one_to_all;
    double noise_std = 0.0;
    std::size_t obs_dim = 1;
    std::uint64_t mixing_seed = 0;
    // Per-factor scale applied to the orthonormal mixing columns. Empty means 1.
    std::vector<double> mixing_gains;
    DiscreteRender discrete_render = DiscreteRender::Sum;

    std::size_t levels(std::size_t factor) const;
    void validate() const;
};

struct Dataset {
    Matrix x;  // N x M
    Matrix y;  // N x n, in [0, 1]
    Matrix u;  // N x M
    GenSpec spec;
    std::uint64_t seed = 0;
};

std::string spec_to_json(const GenSpec& spec);
GenSpec spec_from_json(const std::string& text);
GenSpec load_spec(const std::filesystem::path& path);

Matrix sample_factors(const GenSpec& spec, std::size_t N, std::uint64_t seed);

// M x n matrix with orthonormal columns scaled by the mixing gains.
Matrix mixing_matrix(const GenSpec& spec);

struct Rendered {
    Matrix x;
    Matrix u;
};
Rendered render(const GenSpec& spec, const Matrix& y, std::uint64_t seed);

Dataset generate(const GenSpec& spec, std::size_t N, std::uint64_t seed);

// Exact discrete model of a small all-discrete spec. Factors are y1..yn,
// the observation is x; correlated factors hang off a shared root "h_corr"
// and noise_std > 0 adds a binary "u_x" root that scrambles x when set.
DiscreteModel discretize_to_model(const GenSpec& spec);

Eigen::MatrixXd correlation_matrix(const Matrix& m);

// Dataset directory: x.bin, y.bin, u.bin (row-major little-endian f64) and
// dataset.json with shapes, spec, seed and checksums.
void save_dataset(const std::filesystem::path& dir, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& dir);
void save_csv(const std::filesystem::path& path, const Dataset& d);

std::string fnv1a_hex(const void* data, std::size_t bytes);

}  // namespace rei::synth
