#include "rei/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "rei/errors.hpp"

namespace rei::metrics {

namespace {

using nlohmann::json;

constexpr std::uint64_t kSplitStream = 0x73706c6974;

bool is_constant(const Eigen::VectorXd& c) { return (c.array() - c(0)).abs().maxCoeff() == 0.0; }

Eigen::VectorXd standardize(const Eigen::VectorXd& c) {
    const double mean = c.mean();
    Eigen::VectorXd centered = c.array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(c.size()));
    return centered / sd;
}

// Entropy of a distribution with logarithm base `base`; 0·log 0 = 0.
double entropy(const Eigen::VectorXd& p, double base) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k)
        if (p(k) > 0.0) h -= p(k) * std::log(p(k));
    return h / std::log(base);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

Eigen::VectorXd lasso(const Matrix& X, const Eigen::VectorXd& y, double alpha, double tolerance,
                      std::size_t max_iterations) {
    if (X.rows() != y.size()) throw ShapeMismatch("lasso: X and y row counts differ");
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd Xc = X;  // column-major for column access
    Eigen::VectorXd col_sq = Xc.colwise().squaredNorm().transpose() * inv_n;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd residual = y;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        double max_step = 0.0;
        double max_w = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (col_sq(j) == 0.0) continue;
            const double old = w(j);
            const double rho = Xc.col(j).dot(residual) * inv_n + col_sq(j) * old;
            const double shrunk = std::copysign(std::max(std::abs(rho) - alpha, 0.0), rho) / col_sq(j);
            if (shrunk != old) {
                residual -= (shrunk - old) * Xc.col(j);
                w(j) = shrunk;
            }
            max_step = std::max(max_step, std::abs(shrunk - old));
            max_w = std::max(max_w, std::abs(shrunk));
        }
        if (max_step <= tolerance * std::max(max_w, 1.0)) break;
    }
    return w;
}

ImportanceMatrix importance(const Matrix& latents, const Matrix& factors, const ImportanceConfig& cfg) {
    if (cfg.method != "lasso") throw ConfigError("unknown importance method: " + cfg.method);
    if (latents.rows() != factors.rows()) throw ShapeMismatch("latents and factors row counts differ");
    const Eigen::Index N = latents.rows();
    const Eigen::Index d = latents.cols();
    const Eigen::Index K = factors.cols();
    if (d == 0 || K == 0) throw DegenerateData("latents and factors need at least one column");
    if (N < 10 * std::max(d, K))
        throw DegenerateData("importance needs N >= 10 * max(d, K); got N = " + std::to_string(N));

    Matrix Z = Matrix::Zero(N, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const Eigen::VectorXd c = latents.col(i);
        if (!is_constant(c)) Z.col(i) = standardize(c);
    }
    ImportanceMatrix out{Matrix::Zero(d, K)};
    for (Eigen::Index k = 0; k < K; ++k) {
        const Eigen::VectorXd f = factors.col(k);
        if (is_constant(f)) throw DegenerateData("factor " + std::to_string(k + 1) + " is constant");
        const Eigen::VectorXd w = lasso(Z, standardize(f), cfg.alpha, cfg.tolerance, cfg.max_iterations);
        out.R.col(k) = w.cwiseAbs();
    }
    return out;
}

DciReport dci_disentanglement(const ImportanceMatrix& imp) {
    const Matrix& R = imp.R;
    if ((R.array() < 0.0).any()) throw DegenerateData("importance entries must be nonnegative");
    const Eigen::Index d = R.rows();
    const Eigen::Index K = R.cols();
    DciReport rep;
    rep.P = Matrix::Zero(d, K);
    rep.active.assign(static_cast<std::size_t>(d), false);
    rep.D_per_dim = Eigen::VectorXd::Zero(d);
    rep.rho = Eigen::VectorXd::Zero(d);
    const double total = R.sum();
    for (Eigen::Index i = 0; i < d; ++i) {
        const double row = R.row(i).sum();
        if (row <= 0.0) continue;
        rep.active[static_cast<std::size_t>(i)] = true;
        rep.P.row(i) = R.row(i) / row;
        const Eigen::VectorXd p = rep.P.row(i).transpose();
        rep.D_per_dim(i) = K > 1 ? std::clamp(1.0 - entropy(p, static_cast<double>(K)), 0.0, 1.0) : 1.0;
        rep.rho(i) = row / total;
    }
    if (std::none_of(rep.active.begin(), rep.active.end(), [](bool a) { return a; }))
        throw AllRowsInactive("every latent dimension has zero importance");
    rep.D_aggregate = rep.rho.dot(rep.D_per_dim);
    return rep;
}

void completeness(const ImportanceMatrix& imp, DciReport& rep) {
    const Matrix& R = imp.R;
    const Eigen::Index d = R.rows();
    const Eigen::Index K = R.cols();
    rep.completeness = Eigen::VectorXd::Zero(K);
    const double total = R.sum();
    rep.C_aggregate = 0.0;
    if (total <= 0.0) return;
    for (Eigen::Index k = 0; k < K; ++k) {
        const double col = R.col(k).sum();
        if (col <= 0.0) continue;
        const Eigen::VectorXd p = R.col(k) / col;
        rep.completeness(k) = d > 1 ? std::clamp(1.0 - entropy(p, static_cast<double>(d)), 0.0, 1.0) : 1.0;
        rep.C_aggregate += col / total * rep.completeness(k);
    }
}

Eigen::VectorXd informativeness(const Matrix& latents, const Matrix& factors, std::uint64_t split_seed) {
    if (latents.rows() != factors.rows()) throw ShapeMismatch("latents and factors row counts differ");
    const Eigen::Index N = latents.rows();
    if (N < 50) throw DegenerateData("informativeness needs N >= 50; got N = " + std::to_string(N));

    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::seed_seq seq{split_seed, kSplitStream};
    std::mt19937_64 rng(seq);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    const Eigen::Index n_train = (N * 4) / 5;
    const Eigen::Index n_test = N - n_train;

    auto design = [&](Eigen::Index begin, Eigen::Index count) {
        Eigen::MatrixXd X(count, latents.cols() + 1);
        for (Eigen::Index r = 0; r < count; ++r) {
            X.row(r).head(latents.cols()) = latents.row(order[static_cast<std::size_t>(begin + r)]);
            X(r, latents.cols()) = 1.0;
        }
        return X;
    };
    const Eigen::MatrixXd X_train = design(0, n_train);
    const Eigen::MatrixXd X_test = design(n_train, n_test);
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X_train);

    Eigen::VectorXd r2(factors.cols());
    for (Eigen::Index k = 0; k < factors.cols(); ++k) {
        Eigen::VectorXd y_train(n_train), y_test(n_test);
        for (Eigen::Index r = 0; r < n_train; ++r) y_train(r) = factors(order[static_cast<std::size_t>(r)], k);
        for (Eigen::Index r = 0; r < n_test; ++r)
            y_test(r) = factors(order[static_cast<std::size_t>(n_train + r)], k);
        const double sst = (y_test.array() - y_test.mean()).square().sum();
        if (sst <= 0.0) throw DegenerateData("factor " + std::to_string(k + 1) + " is constant on the held-out split");
        const Eigen::VectorXd beta = cod.solve(y_train);
        const double sse = (X_test * beta - y_test).squaredNorm();
        r2(k) = 1.0 - sse / sst;
    }
    return r2;
}

DciReport evaluate(const Matrix& latents, const Matrix& factors, const ImportanceConfig& cfg, std::uint64_t split_seed) {
    const ImportanceMatrix imp = importance(latents, factors, cfg);
    DciReport rep = dci_disentanglement(imp);
    completeness(imp, rep);
    rep.informativeness = informativeness(latents, factors, split_seed);
    rep.I_aggregate = rep.informativeness.mean();
    return rep;
}

void write_report_csv(const std::filesystem::path& path, const DciReport& r) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "dim,active,D,rho";
    for (Eigen::Index k = 0; k < r.P.cols(); ++k) out << ",P" << (k + 1);
    out << '\n';
    for (Eigen::Index i = 0; i < r.P.rows(); ++i) {
        out << (i + 1) << ',' << (r.active[static_cast<std::size_t>(i)] ? 1 : 0) << ','
            << fmt(100.0 * r.D_per_dim(i)) << ',' << fmt(r.rho(i));
        for (Eigen::Index k = 0; k < r.P.cols(); ++k) out << ',' << fmt(r.P(i, k));
        out << '\n';
    }
}

void write_report_json(const std::filesystem::path& path, const DciReport& r, const ImportanceConfig& cfg,
                       const EvalSeeds& seeds) {
    json j;
    j["D"] = 100.0 * r.D_aggregate;
    j["C"] = 100.0 * r.C_aggregate;
    j["I"] = 100.0 * r.I_aggregate;
    j["seeds"] = {{"model", seeds.model}, {"data", seeds.data}, {"split", seeds.split}};
    j["method"] = {{"name", cfg.method}, {"alpha", cfg.alpha}};
    j["D_per_dim"] = to_vector(100.0 * r.D_per_dim);
    j["active"] = r.active;
    j["completeness"] = to_vector(100.0 * r.completeness);
    j["informativeness"] = to_vector(r.informativeness);
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace rei::metrics
