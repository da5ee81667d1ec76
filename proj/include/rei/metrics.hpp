#pragma once

// DCI scoring of learned representations against ground-truth factors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rei::metrics {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ImportanceConfig {
    std::string method = "lasso";
    double alpha = 0.01;  // L1 weight on standardized data
    double tolerance = 1e-10;
    std::size_t max_iterations = 100000;
};

// Rows are latent dims, columns are factors.
struct ImportanceMatrix {
    Matrix R;
};

// Minimizes (1/2N)‖y − Xw‖² + alpha‖w‖₁ by cyclic coordinate descent.
// X and y are expected to be centered; no intercept is fitted.
Eigen::VectorXd lasso(const Matrix& X, const Eigen::VectorXd& y, double alpha, double tolerance = 1e-10,
                      std::size_t max_iterations = 100000);

ImportanceMatrix importance(const Matrix& latents, const Matrix& factors, const ImportanceConfig& cfg = {});

struct DciReport {
    Matrix P;                          // row-normalized R (inactive rows left at zero)
    std::vector<bool> active;
    Eigen::VectorXd D_per_dim;         // in [0, 1]; 0 for inactive rows
    Eigen::VectorXd rho;               // aggregate weights; 0 for inactive rows
    double D_aggregate = 0.0;          // in [0, 1]
    Eigen::VectorXd completeness;      // per factor, in [0, 1]
    double C_aggregate = 0.0;
    Eigen::VectorXd informativeness;   // per-factor held-out R²
    double I_aggregate = 0.0;

    double D_percent() const { return 100.0 * D_aggregate; }
};

// Fills P, active, D_per_dim, rho, D_aggregate.
DciReport dci_disentanglement(const ImportanceMatrix& R);
// Per-factor completeness and its importance-weighted mean.
void completeness(const ImportanceMatrix& R, DciReport& report);

// 80/20 split by split_seed, least squares per factor, held-out R².
Eigen::VectorXd informativeness(const Matrix& latents, const Matrix& factors, std::uint64_t split_seed);

struct EvalSeeds {
    std::uint64_t model = 0;
    std::uint64_t data = 0;
    std::uint64_t split = 0;
};

DciReport evaluate(const Matrix& latents, const Matrix& factors, const ImportanceConfig& cfg, std::uint64_t split_seed);

// CSV: one row per latent dim. JSON: {D, C, I, seeds, method, ...} on the 0–100 scale.
void write_report_csv(const std::filesystem::path& path, const DciReport& r);
void write_report_json(const std::filesystem::path& path, const DciReport& r, const ImportanceConfig& cfg,
                       const EvalSeeds& seeds);

}  // namespace rei::metrics
