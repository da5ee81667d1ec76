#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "rei/errors.hpp"
#include "rei/metrics.hpp"

namespace rei {
namespace {

using metrics::ImportanceMatrix;
using metrics::Matrix;

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

// 64-bit LCG shared with the fixture script so both sides see the same data.
struct Lcg {
    std::uint64_t s;
    double next() {
        s = 6364136223846793005ULL * s + 1442695040888963407ULL;
        return static_cast<double>(s >> 11) * 0x1.0p-53;
    }
};

Matrix rotation_fixture_factors() {
    Lcg g{12345};
    Matrix y(300, 3);
    for (Eigen::Index r = 0; r < 300; ++r)
        for (Eigen::Index c = 0; c < 3; ++c) y(r, c) = g.next();
    return y;
}

Matrix rotation_fixture_latents(const Matrix& y) {
    Matrix q(3, 3);
    q << 1, 2, 2, 2, 1, -2, 2, -2, 1;
    q /= 3.0;
    return y * q.transpose();
}

TEST(Dci, OneHotRowScoresOne) {
    ImportanceMatrix R{Matrix(1, 4)};
    R.R << 0, 3.5, 0, 0;
    const auto rep = metrics::dci_disentanglement(R);
    EXPECT_NEAR(rep.D_per_dim(0), 1.0, 1e-12);
    EXPECT_NEAR(rep.D_aggregate, 1.0, 1e-12);
}

TEST(Dci, UniformRowScoresZero) {
    ImportanceMatrix R{Matrix::Constant(1, 5, 0.2)};
    EXPECT_NEAR(metrics::dci_disentanglement(R).D_per_dim(0), 0.0, 1e-12);
}

TEST(Dci, TwoOfFourScoresHalf) {
    ImportanceMatrix R{Matrix(1, 4)};
    R.R << 0.5, 0.5, 0, 0;
    EXPECT_NEAR(metrics::dci_disentanglement(R).D_per_dim(0), 0.5, 1e-12);
}

TEST(Dci, AggregateWeightsByRowImportance) {
    ImportanceMatrix R{Matrix(2, 2)};
    R.R << 3, 0, 1, 1;
    const auto rep = metrics::dci_disentanglement(R);
    EXPECT_NEAR(rep.rho(0), 0.6, 1e-15);
    EXPECT_NEAR(rep.D_aggregate, 0.6 * 1.0 + 0.4 * 0.0, 1e-12);
    EXPECT_NEAR(rep.D_percent(), 60.0, 1e-10);
}

TEST(Dci, InactiveRowsAreExcluded) {
    ImportanceMatrix R{Matrix(3, 2)};
    R.R << 1, 0, 0, 0, 0, 2;
    const auto rep = metrics::dci_disentanglement(R);
    EXPECT_FALSE(rep.active[1]);
    EXPECT_DOUBLE_EQ(rep.rho(1), 0.0);
    EXPECT_NEAR(rep.D_aggregate, 1.0, 1e-12);
    EXPECT_NEAR(rep.P.row(0).sum() + rep.P.row(2).sum(), 2.0, 1e-15);
}

TEST(Dci, AllRowsInactiveThrows) {
    ImportanceMatrix R{Matrix::Zero(3, 2)};
    EXPECT_THROW(metrics::dci_disentanglement(R), AllRowsInactive);
}

TEST(Dci, RowScaleInvariance) {
    ImportanceMatrix R{uniform_matrix(6, 4, 3)};
    const auto base = metrics::dci_disentanglement(R);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int trial = 0; trial < 50; ++trial) {
        ImportanceMatrix S = R;
        const Eigen::Index row = static_cast<Eigen::Index>(rng() % 6);
        S.R.row(row) *= scale(rng);
        const auto rep = metrics::dci_disentanglement(S);
        EXPECT_LT((rep.P - base.P).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((rep.D_per_dim - base.D_per_dim).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Dci, PermutationEquivariance) {
    ImportanceMatrix R{uniform_matrix(7, 3, 5)};
    const auto base = metrics::dci_disentanglement(R);
    std::vector<Eigen::Index> perm(7);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        ImportanceMatrix S{Matrix(7, 3)};
        for (Eigen::Index i = 0; i < 7; ++i) S.R.row(i) = R.R.row(perm[static_cast<std::size_t>(i)]);
        const auto rep = metrics::dci_disentanglement(S);
        for (Eigen::Index i = 0; i < 7; ++i)
            EXPECT_NEAR(rep.D_per_dim(i), base.D_per_dim(perm[static_cast<std::size_t>(i)]), 1e-14);
        EXPECT_NEAR(rep.D_aggregate, base.D_aggregate, 1e-14);
    }
}

TEST(Dci, ValuesStayInRange) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Matrix m = uniform_matrix(5, 4, seed);
        m = (m.array() < 0.3).select(0.0, m);
        if (m.sum() == 0.0) continue;
        const auto rep = metrics::dci_disentanglement(ImportanceMatrix{m});
        EXPECT_GE(rep.D_per_dim.minCoeff(), 0.0);
        EXPECT_LE(rep.D_per_dim.maxCoeff(), 1.0);
        EXPECT_GE(rep.D_aggregate, 0.0);
        EXPECT_LE(rep.D_aggregate, 1.0);
    }
}

TEST(Lasso, ZeroAlphaMatchesLeastSquares) {
    Matrix X = uniform_matrix(200, 4, 9);
    X.rowwise() -= X.colwise().mean();
    Eigen::VectorXd beta(4);
    beta << 1.0, -2.0, 0.5, 0.0;
    Eigen::VectorXd y = X * beta;
    const auto w = metrics::lasso(X, y, 0.0, 1e-14);
    EXPECT_LT((w - beta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Lasso, LargeAlphaZeroesEverything) {
    Matrix X = uniform_matrix(100, 3, 10);
    X.rowwise() -= X.colwise().mean();
    Eigen::VectorXd y = X.col(0);
    EXPECT_EQ(metrics::lasso(X, y, 10.0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Importance, CopyMapIsDiagonal) {
    const Matrix y = uniform_matrix(2000, 3, 11);
    const auto imp = metrics::importance(y, y);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index k = 0; k < 3; ++k) {
            if (i == k)
                EXPECT_NEAR(imp.R(i, k), 0.99, 1e-9);
            else
                EXPECT_EQ(imp.R(i, k), 0.0);
        }
    EXPECT_NEAR(metrics::dci_disentanglement(imp).D_aggregate, 1.0, 1e-12);
}

TEST(Importance, MonotoneRescaledCopyScoresAtLeast99) {
    const Matrix y = uniform_matrix(5000, 4, 12);
    Matrix z = y;
    z.col(0) = (3.0 * y.col(0).array()).exp();
    z.col(1) = y.col(1).array().cube() * -0.5;
    z.col(2) = (y.col(2).array() + 0.1).log();
    z.col(3) = 7.0 * y.col(3).array() + 2.0;
    const auto rep = metrics::dci_disentanglement(metrics::importance(z, y));
    EXPECT_GE(rep.D_aggregate, 0.99);
}

TEST(Importance, ConstantLatentGetsZeroImportance) {
    Matrix y = uniform_matrix(500, 2, 13);
    Matrix z(500, 3);
    z.leftCols(2) = y;
    z.col(2).setConstant(4.0);
    const auto imp = metrics::importance(z, y);
    EXPECT_EQ(imp.R.row(2).sum(), 0.0);
    const auto rep = metrics::dci_disentanglement(imp);
    EXPECT_FALSE(rep.active[2]);
}

TEST(Importance, AllConstantLatentsAreInactive) {
    const Matrix y = uniform_matrix(500, 2, 14);
    const Matrix z = Matrix::Constant(500, 3, 1.5);
    const auto imp = metrics::importance(z, y);
    EXPECT_EQ(imp.R.sum(), 0.0);
    EXPECT_THROW(metrics::dci_disentanglement(imp), AllRowsInactive);
}

TEST(Importance, ConstantFactorThrows) {
    Matrix y = uniform_matrix(500, 2, 15);
    y.col(1).setConstant(0.3);
    EXPECT_THROW(metrics::importance(uniform_matrix(500, 2, 16), y), DegenerateData);
}

TEST(Importance, TooFewRowsThrows) {
    EXPECT_THROW(metrics::importance(uniform_matrix(39, 4, 1), uniform_matrix(39, 2, 2)), DegenerateData);
}

TEST(Importance, UnknownMethodThrows) {
    metrics::ImportanceConfig cfg;
    cfg.method = "forest";
    EXPECT_THROW(metrics::importance(uniform_matrix(100, 2, 1), uniform_matrix(100, 2, 2), cfg), ConfigError);
}

// Reference values from scikit-learn Lasso(alpha=0.01, fit_intercept=False)
// on the same standardized data.
TEST(Importance, RotationFixture) {
    const Matrix y = rotation_fixture_factors();
    EXPECT_DOUBLE_EQ(y(0, 0), 0.10957860598549463);
    const auto imp = metrics::importance(rotation_fixture_latents(y), y);
    Matrix expected(3, 3);
    expected << 0.29687547837140815, 0.6223481247241776, 0.649103370256331,  //
        0.654007681380845, 0.33199677136113676, 0.7030975483624836,          //
        0.6465228585024362, 0.6663411826809312, 0.3429018441238334;
    EXPECT_LT((imp.R - expected).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(metrics::dci_disentanglement(imp).D_aggregate, 0.041574910203882307, 1e-8);
}

TEST(Importance, Deterministic) {
    const Matrix y = uniform_matrix(400, 3, 17);
    const Matrix z = uniform_matrix(400, 5, 18) + y * Matrix::Ones(3, 5);
    EXPECT_EQ(metrics::importance(z, y).R, metrics::importance(z, y).R);
}

TEST(Informativeness, CopyGivesOne) {
    const Matrix y = uniform_matrix(1000, 3, 19);
    const auto r2 = metrics::informativeness(y, y, 1);
    for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(r2(k), 1.0, 1e-12);
}

TEST(Informativeness, NoiseGivesNearZero) {
    const Matrix y = uniform_matrix(10000, 3, 20);
    const Matrix z = uniform_matrix(10000, 5, 21);
    const auto r2 = metrics::informativeness(z, y, 2);
    EXPECT_LE(r2.maxCoeff(), 0.05);
}

TEST(Informativeness, DuplicatedColumnsLeaveR2Unchanged) {
    const Matrix y = uniform_matrix(800, 2, 22);
    Matrix z = uniform_matrix(800, 3, 23);
    z.col(0) += y.col(0);
    z.col(1) += 0.5 * y.col(1);
    Matrix dup(800, 5);
    dup.leftCols(3) = z;
    dup.rightCols(2) = z.leftCols(2);
    const auto a = metrics::informativeness(z, y, 3);
    const auto b = metrics::informativeness(dup, y, 3);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Informativeness, Errors) {
    EXPECT_THROW(metrics::informativeness(uniform_matrix(49, 2, 1), uniform_matrix(49, 2, 2), 0), DegenerateData);
    Matrix y = uniform_matrix(100, 2, 3);
    y.col(0).setConstant(1.0);
    EXPECT_THROW(metrics::informativeness(uniform_matrix(100, 2, 4), y, 0), DegenerateData);
}

TEST(Completeness, DiagonalIsComplete) {
    ImportanceMatrix R{Matrix::Identity(3, 3)};
    auto rep = metrics::dci_disentanglement(R);
    metrics::completeness(R, rep);
    EXPECT_NEAR(rep.C_aggregate, 1.0, 1e-12);
    ImportanceMatrix U{Matrix::Ones(3, 3)};
    rep = metrics::dci_disentanglement(U);
    metrics::completeness(U, rep);
    EXPECT_NEAR(rep.C_aggregate, 0.0, 1e-12);
}

TEST(Report, WritesCsvAndJson) {
    const Matrix y = uniform_matrix(500, 2, 24);
    const auto rep = metrics::evaluate(y, y, {}, 5);
    const auto dir = std::filesystem::temp_directory_path() / "rei_metrics_report";
    std::filesystem::create_directories(dir);
    metrics::write_report_csv(dir / "r.csv", rep);
    metrics::write_report_json(dir / "r.json", rep, {}, {1, 2, 5});
    std::ifstream csv(dir / "r.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "dim,active,D,rho,P1,P2");
    std::ifstream js(dir / "r.json");
    const auto j = nlohmann::json::parse(js);
    EXPECT_NEAR(j["D"].get<double>(), 100.0, 1e-9);
    EXPECT_NEAR(j["I"].get<double>(), 100.0, 1e-9);
    EXPECT_EQ(j["seeds"]["split"].get<int>(), 5);
    EXPECT_EQ(j["method"]["name"], "lasso");
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace rei
