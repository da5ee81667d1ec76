#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "rei/errors.hpp"
#include "rei/vae.hpp"
#include "support/gradcheck.hpp"

namespace rei {
namespace {

using ad::Matrix;
using ad::Tape;
using vae::GaussianParams;
using vae::Mlp;
using vae::Mode;
using vae::Model;
using vae::ModelConfig;

constexpr double kLog2Pi = 1.8378770664093453;

Matrix uniform(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

Matrix normal(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// Single linear layer emitting a fixed Gaussian head regardless of input.
Mlp constant_head(std::size_t in, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_var) {
    std::mt19937_64 rng(0);
    Mlp m = Mlp::create("head", in, {}, static_cast<std::size_t>(2 * mean.size()), rng);
    m.zero();
    m.biases[0].value.leftCols(mean.size()) = mean.transpose();
    m.biases[0].value.rightCols(mean.size()) = log_var.transpose();
    return m;
}

ModelConfig small_config(Mode mode, std::size_t M, std::size_t n, std::size_t d) {
    ModelConfig c;
    c.mode = mode;
    c.obs_dim = M;
    c.n_factors = n;
    c.latent_dim = d;
    c.hidden = {6};
    c.mc_samples = 4;
    return c;
}

TEST(Encode, ZeroWeightsGiveStandardNormal) {
    std::mt19937_64 rng(1);
    Mlp enc = Mlp::create("enc", 5, {8, 8}, 6, rng);
    enc.zero();
    const GaussianParams p = vae::encode(enc, Eigen::VectorXd::Random(4), 0.3);
    EXPECT_EQ(p.mean, Eigen::VectorXd::Zero(3));
    EXPECT_EQ(p.log_var, Eigen::VectorXd::Zero(3));
}

TEST(Encode, DeterministicAndMatchesTapePath) {
    std::mt19937_64 rng(2);
    Mlp enc = Mlp::create("enc", 5, {8}, 6, rng);
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1.0, 1.0);
    const GaussianParams a = vae::encode(enc, x, 0.7), b = vae::encode(enc, x, 0.7);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.log_var, b.log_var);
    Tape tape;
    const auto q = vae::encode(tape, enc, Matrix(x.transpose()), Matrix::Constant(1, 1, 0.7));
    EXPECT_NEAR((q.mean.value().row(0).transpose() - a.mean).norm(), 0.0, 1e-14);
    EXPECT_NEAR((q.log_var.value().row(0).transpose() - a.log_var).norm(), 0.0, 1e-14);
}

TEST(Encode, LogVarIsClamped) {
    Eigen::VectorXd lv(2);
    lv << 40.0, -40.0;
    const Mlp enc = constant_head(3, Eigen::VectorXd::Zero(2), lv);
    const GaussianParams p = vae::encode(enc, Eigen::VectorXd::Zero(2), 0.0);
    EXPECT_EQ(p.log_var(0), vae::kLogVarMax);
    EXPECT_EQ(p.log_var(1), vae::kLogVarMin);
}

TEST(Model, LatentDefaultsToObservationSize) {
    std::mt19937_64 rng(3);
    ModelConfig c = small_config(Mode::Rei, 7, 2, 0);
    const Model m = Model::create(c, rng);
    EXPECT_EQ(m.encoder.input_dim(), 8u);
    EXPECT_EQ(m.encoder.output_dim(), 14u);
    EXPECT_EQ(m.decoder.input_dim(), 7u);
    ASSERT_TRUE(m.prior.has_value());
    EXPECT_EQ(m.prior->input_dim(), 2u);
    c.mode = Mode::ReiNoise;
    EXPECT_EQ(Model::create(c, rng).prior->input_dim(), 9u);
    c.mode = Mode::Vae;
    EXPECT_FALSE(Model::create(c, rng).prior.has_value());
}

TEST(Reparameterize, Examples) {
    GaussianParams p{Eigen::VectorXd::Constant(3, 0.4), Eigen::VectorXd::Constant(3, 1.2)};
    EXPECT_EQ(vae::reparameterize(p, Eigen::VectorXd::Zero(3)), p.mean);
    GaussianParams unit{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)};
    const Eigen::VectorXd noise = Eigen::VectorXd::LinSpaced(3, -1, 2);
    EXPECT_EQ(vae::reparameterize(unit, noise), noise);
    EXPECT_THROW(vae::reparameterize(p, Eigen::VectorXd::Zero(2)), ShapeMismatch);
}

TEST(Reparameterize, MomentsMatchAt1e5Draws) {
    std::mt19937_64 rng(4);
    const Eigen::Index n = 100000;
    Tape tape;
    Matrix mean(1, 2), log_var(1, 2);
    mean << 0.5, -2.0;
    log_var << 0.8, -1.5;
    vae::GaussianVars p{ad::broadcast_rows(tape.constant(mean), n), ad::broadcast_rows(tape.constant(log_var), n)};
    const Matrix z = vae::reparameterize(tape, p, normal(rng, n, 2)).value();
    for (Eigen::Index j = 0; j < 2; ++j) {
        const double m = z.col(j).mean();
        const double v = (z.col(j).array() - m).square().sum() / static_cast<double>(n - 1);
        EXPECT_NEAR(m, mean(0, j), 0.03 * std::exp(0.5 * log_var(0, j)));
        EXPECT_NEAR(v / std::exp(log_var(0, j)), 1.0, 0.03);
    }
}

TEST(GaussianKl, Examples) {
    GaussianParams unit{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)};
    EXPECT_EQ(vae::gaussian_kl(unit, unit), 0.0);
    GaussianParams shifted{Eigen::VectorXd::Ones(4), Eigen::VectorXd::Zero(4)};
    EXPECT_NEAR(vae::gaussian_kl(shifted, unit), 0.5 * 4, 1e-15);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        GaussianParams a{Eigen::VectorXd(3), Eigen::VectorXd(3)}, b{Eigen::VectorXd(3), Eigen::VectorXd(3)};
        for (int i = 0; i < 3; ++i) {
            a.mean(i) = n(rng), a.log_var(i) = n(rng), b.mean(i) = n(rng), b.log_var(i) = n(rng);
        }
        EXPECT_GE(vae::gaussian_kl(a, b), 0.0);
    }
    EXPECT_THROW(vae::gaussian_kl(unit, GaussianParams{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)}), ShapeMismatch);
}

TEST(ElboStandard, PerfectAutoencoderAtPrior) {
    std::mt19937_64 rng(6);
    ModelConfig c = small_config(Mode::Vae, 5, 2, 3);
    Model m = Model::create(c, rng);
    m.encoder.zero();
    m.decoder.zero();
    const Matrix x = Matrix::Zero(8, 5);
    Tape tape;
    const auto t = vae::elbo_standard(tape, m, x, normal(rng, 8, 3));
    EXPECT_NEAR(t.regularizer.item(), 0.0, 1e-15);
    EXPECT_NEAR(t.reconstruction.item(), -2.5 * kLog2Pi, 1e-12);
    EXPECT_NEAR(t.total.item(), t.reconstruction.item(), 1e-15);
}

TEST(ElboStandard, RegularizerIgnoresDecoder) {
    std::mt19937_64 rng(7);
    Model m = Model::create(small_config(Mode::Vae, 4, 2, 2), rng);
    const Matrix x = uniform(rng, 10, 4), noise = normal(rng, 10, 2);
    Tape t1;
    const double before = vae::elbo_standard(t1, m, x, noise).regularizer.item();
    m.decoder = Mlp::create("decoder", 2, {6}, 4, rng);
    Tape t2;
    EXPECT_EQ(vae::elbo_standard(t2, m, x, noise).regularizer.item(), before);
}

TEST(ElboStandard, OneDimensionalClosedForm) {
    // Decoder x_hat = z, encoder constant N(mu, exp(lv)); the expected ELBO is
    // -0.5((x-mu)^2 + s2) - 0.5 log 2pi - 0.5(mu^2 + s2 - 1 - lv).
    const double x = 1.5, mu = 0.8;
    const Eigen::Index n = 200000;
    std::mt19937_64 rng(8);
    const Matrix noise = normal(rng, n, 1);
    double previous = 0.0;
    for (double lv : {0.0, 0.5, 1.0, 1.5}) {
        ModelConfig c = small_config(Mode::Vae, 1, 1, 1);
        c.hidden = {};
        Model m = Model::create(c, rng);
        m.encoder = constant_head(2, Eigen::VectorXd::Constant(1, mu), Eigen::VectorXd::Constant(1, lv));
        m.decoder.zero();
        m.decoder.weights[0].value(0, 0) = 1.0;
        Tape tape;
        const double total = vae::elbo_standard(tape, m, Matrix::Constant(n, 1, x), noise).total.item();
        const double s2 = std::exp(lv);
        const double closed = -0.5 * ((x - mu) * (x - mu) + s2) - 0.5 * kLog2Pi - 0.5 * (mu * mu + s2 - 1.0 - lv);
        EXPECT_NEAR(total, closed, 0.02);
        if (lv > 0.0) EXPECT_LT(total, previous);  // s2 > 1/2 past the optimum
        previous = total;
    }
}

TEST(ReiRegularizer, SingleFactorMatchesClosedFormKl) {
    std::mt19937_64 rng(9);
    for (int setting = 0; setting < 5; ++setting) {
        ModelConfig c = small_config(Mode::Rei, 3, 1, 2);
        c.hidden = {5};
        Model m = Model::create(c, rng);
        for (auto* p : m.params()) p->value *= 3.0;
        const Matrix x = uniform(rng, 1, 3), y = uniform(rng, 1, 1);
        const GaussianParams q = vae::encode(m.encoder, x.row(0).transpose(), y(0, 0));
        const Matrix head = m.prior->forward(y);
        const GaussianParams p{head.leftCols(2).row(0).transpose(),
                               head.rightCols(2).row(0).transpose().cwiseMax(-10.0).cwiseMin(10.0)};
        const double exact = vae::gaussian_kl(q, p);

        const Eigen::Index draws = 100000;
        const Matrix xs = x.replicate(draws, 1), ys = y.replicate(draws, 1);
        const vae::FactorSampler sampler(y);
        const vae::ReiNoise noise = vae::draw_rei_noise(draws, 2, 1, 1, sampler, rng);
        Tape tape;
        const auto qv = vae::encode(tape, m.encoder, xs, ys);
        const double mc = ad::mean(vae::rei_regularizer(tape, m, qv, ys, 0, sampler, noise)).item();
        EXPECT_NEAR(mc, exact, 0.01 * exact + 1e-3) << "setting " << setting;
    }
}

TEST(ReiRegularizer, IdenticalComponentsGiveZero) {
    std::mt19937_64 rng(10);
    ModelConfig c = small_config(Mode::Rei, 3, 2, 2);
    Model m = Model::create(c, rng);
    Eigen::VectorXd mean(2), lv(2);
    mean << 0.3, -0.2;
    lv << -0.5, 0.4;
    m.encoder = constant_head(4, mean, lv);
    m.prior = constant_head(2, mean, lv);
    const Matrix x = uniform(rng, 16, 3), y = uniform(rng, 16, 2);
    const vae::FactorSampler sampler(y);
    const auto noise = vae::draw_rei_noise(16, 2, 3, 8, sampler, rng);
    Tape tape;
    const auto q = vae::encode(tape, m.encoder, x, y.col(1));
    const Matrix reg = vae::rei_regularizer(tape, m, q, y, 1, sampler, noise).value();
    EXPECT_LT(reg.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ReiRegularizer, Errors) {
    std::mt19937_64 rng(11);
    const Matrix y = uniform(rng, 4, 2);
    EXPECT_THROW(vae::FactorSampler(Matrix(0, 2)), EmptySampler);
    Model vae_model = Model::create(small_config(Mode::Vae, 3, 2, 2), rng);
    const vae::FactorSampler sampler(y);
    const auto noise = vae::draw_rei_noise(4, 2, 1, 2, sampler, rng);
    Tape tape;
    const auto q = vae::encode(tape, vae_model.encoder, uniform(rng, 4, 3), y.col(0));
    EXPECT_THROW(vae::rei_regularizer(tape, vae_model, q, y, 0, sampler, noise), ShapeMismatch);
    Model rei_model = Model::create(small_config(Mode::ReiNoise, 3, 2, 2), rng);
    EXPECT_THROW(vae::rei_regularizer(tape, rei_model, q, y, 0, sampler, noise), ShapeMismatch);
}

TEST(PriorInputs, ReplaceOnlyTheConditionedFactor) {
    Matrix y(2, 3), pool(3, 3), u(3, 2);
    y << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
    pool << 1, 2, 3, 4, 5, 6, 7, 8, 9;
    u << -1, -2, -3, -4, -5, -6;
    const vae::FactorSampler sampler(pool, &u);
    const Matrix in = vae::prior_inputs(y, 1, sampler, {2, 0, 1, 1}, 2, true);
    Matrix expect(4, 5);
    expect << 7, 0.2, 9, -5, -6,  //
        1, 0.2, 3, -1, -2,        //
        4, 0.5, 6, -3, -4,        //
        4, 0.5, 6, -3, -4;
    EXPECT_EQ(in, expect);
}

TEST(ElboRei, ZeroLambdaIsPureReconstruction) {
    std::mt19937_64 rng(12);
    ModelConfig c = small_config(Mode::Rei, 4, 2, 2);
    c.lambda = 0.0;
    Model m = Model::create(c, rng);
    const Matrix x = uniform(rng, 6, 4), y = uniform(rng, 6, 2);
    const vae::FactorSampler sampler(y);
    const auto noise = vae::draw_rei_noise(6, 2, 1, 4, sampler, rng);
    Tape tape;
    const auto t = vae::elbo_rei(tape, m, x, y, 0, sampler, noise);
    EXPECT_EQ(t.total.item(), t.reconstruction.item());
}

TEST(ElboRei, BatchObjectiveAveragesOverFactors) {
    std::mt19937_64 init(13);
    Model m = Model::create(small_config(Mode::Rei, 4, 3, 2), init);
    const Matrix x = uniform(init, 6, 4), y = uniform(init, 6, 3);
    const vae::FactorSampler sampler(y);
    std::mt19937_64 rng(99), replay(99);
    Tape tape;
    const auto joint = vae::batch_objective(tape, m, x, y, sampler, rng);
    double total = 0.0, reg = 0.0, rec = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        const auto noise = vae::draw_rei_noise(6, 2, 1, 4, sampler, replay);
        const auto t = vae::elbo_rei(tape, m, x, y, c, sampler, noise);
        total += t.total.item() / 3.0;
        reg += t.regularizer.item() / 3.0;
        rec += t.reconstruction.item() / 3.0;
    }
    EXPECT_NEAR(joint.total.item(), total, 1e-12);
    EXPECT_NEAR(joint.regularizer.item(), reg, 1e-12);
    EXPECT_NEAR(joint.reconstruction.item(), rec, 1e-12);
}

TEST(ElboRei, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(14);
    for (Mode mode : {Mode::Rei, Mode::ReiNoise}) {
        ModelConfig c = small_config(mode, 2, 2, 2);
        c.hidden = {4};
        c.z_draws = 2;
        c.lambda = 0.7;
        Model m = Model::create(c, rng);
        const Matrix x = uniform(rng, 5, 2, -1.0, 1.0), y = uniform(rng, 5, 2), u = normal(rng, 5, 2);
        const vae::FactorSampler sampler(y, &u);
        const auto noise = vae::draw_rei_noise(5, 2, 2, 4, sampler, rng);
        const double err = testing::gradcheck(m.params(), [&](Tape& tape) {
            return vae::elbo_rei(tape, m, x, y, 1, sampler, noise).total;
        });
        EXPECT_LT(err, 1e-4) << vae::mode_name(mode);
    }
}

TEST(Train, ZeroEpochsLeaveParametersUnchanged) {
    std::mt19937_64 rng(15);
    Model m = Model::create(small_config(Mode::Rei, 3, 2, 2), rng);
    const Model before = m;
    const Matrix x = uniform(rng, 20, 3), y = uniform(rng, 20, 2);
    vae::TrainConfig cfg;
    cfg.epochs = 0;
    cfg.batch_size = 8;
    EXPECT_TRUE(vae::train(m, {x, y}, cfg, 1).empty());
    for (std::size_t i = 0; i < m.params().size(); ++i) EXPECT_EQ(m.params()[i]->value, before.params()[i]->value);
}

TEST(Train, IdenticalSeedsGiveIdenticalModels) {
    std::mt19937_64 data_rng(16);
    const Matrix x = uniform(data_rng, 40, 3), y = uniform(data_rng, 40, 2);
    vae::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.adam.lr = 1e-3;
    auto run = [&](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        Model m = Model::create(small_config(Mode::Rei, 3, 2, 2), rng);
        const auto trace = vae::train(m, {x, y}, cfg, seed);
        return std::pair{m, trace};
    };
    const auto [a, ta] = run(7);
    const auto [b, tb] = run(7);
    const auto [c, tc] = run(8);
    for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i]->value, b.params()[i]->value);
    EXPECT_EQ(ta.back().total, tb.back().total);
    EXPECT_NE(ta.back().total, tc.back().total);
}

TEST(Train, Errors) {
    std::mt19937_64 rng(17);
    Model m = Model::create(small_config(Mode::Rei, 3, 2, 2), rng);
    const Matrix empty_x(0, 3), empty_y(0, 2);
    EXPECT_THROW(vae::train(m, {empty_x, empty_y}, {}, 1), EmptyDataset);
    const Matrix x = uniform(rng, 10, 3), y = uniform(rng, 10, 2);
    vae::TrainConfig big;
    big.batch_size = 11;
    EXPECT_THROW(vae::train(m, {x, y}, big, 1), ConfigError);
    Model noisy = Model::create(small_config(Mode::ReiNoise, 3, 2, 2), rng);
    vae::TrainConfig cfg;
    cfg.batch_size = 5;
    EXPECT_THROW(vae::train(noisy, {x, y}, cfg, 1), ShapeMismatch);
}

TEST(Represent, VarianceShrinksAsOneOverL) {
    Eigen::VectorXd mean(2), lv(2);
    mean << 0.5, -0.5;
    lv << 0.0, 1.0;
    const Mlp enc = constant_head(3, mean, lv);
    const Matrix x = Matrix::Zero(4000, 2), yc = Matrix::Zero(4000, 1);
    std::mt19937_64 rng(18);
    const Matrix one = vae::represent(enc, x, yc, 1, rng);
    const Matrix hundred = vae::represent(enc, x, yc, 100, rng);
    for (Eigen::Index j = 0; j < 2; ++j) {
        auto var = [&](const Matrix& m) { return (m.col(j).array() - m.col(j).mean()).square().mean(); };
        EXPECT_NEAR(var(one) / std::exp(lv(j)), 1.0, 0.1);
        EXPECT_NEAR(var(hundred) * 100.0 / std::exp(lv(j)), 1.0, 0.1);
        EXPECT_NEAR(hundred.col(j).mean(), mean(j), 0.01);
    }
    EXPECT_THROW(vae::represent(enc, x, yc, 0, rng), ShapeMismatch);
}

TEST(Representation, ReiConcatenatesPerFactorEncodings) {
    std::mt19937_64 rng(19);
    Model m = Model::create(small_config(Mode::Rei, 3, 2, 2), rng);
    const Matrix x = uniform(rng, 10, 3), y = uniform(rng, 10, 2);
    const Matrix z = vae::representation(m, x, y, 5, 1);
    EXPECT_EQ(z.cols(), 4);
    EXPECT_EQ(z, vae::representation(m, x, y, 5, 1));
    Model v = Model::create(small_config(Mode::Vae, 3, 2, 2), rng);
    EXPECT_EQ(vae::representation(v, x, y, 5, 1).cols(), 2);
}

TEST(Bundle, RoundTrip) {
    std::mt19937_64 rng(20);
    ModelConfig c = small_config(Mode::ReiNoise, 3, 2, 2);
    const Model m = Model::create(c, rng);
    const auto dir = std::filesystem::temp_directory_path() / "rei_bundle_test";
    std::filesystem::remove_all(dir);
    vae::save_bundle(dir, m, {{1, -3.0, 0.5, -3.25}}, 5, {});
    const Model back = vae::load_bundle(dir);
    EXPECT_EQ(vae::model_config_to_json(back.config), vae::model_config_to_json(m.config));
    for (std::size_t i = 0; i < m.params().size(); ++i) EXPECT_EQ(back.params()[i]->value, m.params()[i]->value);
    std::ifstream trace(dir / "loss_trace.csv");
    std::string header;
    std::getline(trace, header);
    EXPECT_EQ(header, "epoch,reconstruction,regularizer,total");
    std::filesystem::remove_all(dir);
}

TEST(ModelConfig, UnknownKeysAreErrors) {
    ModelConfig c = small_config(Mode::Rei, 3, 2, 2);
    const std::string text = vae::model_config_to_json(c);
    EXPECT_EQ(vae::model_config_to_json(vae::model_config_from_json(text)), text);
    std::string bad = text;
    bad.insert(bad.find('{') + 1, "\"bogus\": 1,");
    EXPECT_THROW(vae::model_config_from_json(bad), ConfigError);
    EXPECT_THROW(vae::parse_mode("beta-vae"), ConfigError);
}

}  // namespace
}  // namespace rei
