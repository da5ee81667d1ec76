#pragma once

// Gaussian VAE baseline and the identification-regularized (ReI) variant.
//
// All batched functions take examples as rows. ELBO values follow the
// maximization convention: total = reconstruction - lambda * regularizer.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rei/autodiff.hpp"

namespace rei::vae {

using ad::Matrix;

enum class Mode { Vae, Rei, ReiNoise };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct Mlp {
    std::vector<ad::Tensor> weights;
    std::vector<ad::Tensor> biases;

    // relu between layers, linear output. Weights and biases drawn from
    // U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static Mlp create(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden,
                      std::size_t out, std::mt19937_64& rng);

    std::size_t input_dim() const { return static_cast<std::size_t>(weights.front().value.rows()); }
    std::size_t output_dim() const { return static_cast<std::size_t>(weights.back().value.cols()); }

    ad::Var forward(ad::Tape& tape, ad::Var input);
    Matrix forward(const Matrix& input) const;

    std::vector<ad::Tensor*> params();
    std::vector<const ad::Tensor*> params() const;
    void zero();
};

struct GaussianParams {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_var;
};

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;

struct ModelConfig {
    Mode mode = Mode::Rei;
    std::size_t obs_dim = 0;      // M
    std::size_t n_factors = 0;    // n
    std::size_t latent_dim = 0;   // 0 means obs_dim
    std::vector<std::size_t> hidden = {64, 64};
    double lambda = 1.0;
    std::size_t mc_samples = 1000;  // S
    std::size_t z_draws = 1;
    bool decoder_uses_yc = false;

    std::size_t latent() const { return latent_dim == 0 ? obs_dim : latent_dim; }
    // PriorNet input width: the factor vector, plus u in ReiNoise mode.
    std::size_t prior_input_dim() const { return n_factors + (mode == Mode::ReiNoise ? obs_dim : 0); }
};

struct Model {
    ModelConfig config;
    Mlp encoder;                 // (x ⧺ y_c) -> (mean ⧺ log_var)
    Mlp decoder;                 // z (⧺ y_c) -> x mean
    std::optional<Mlp> prior;    // PriorNet, rei modes only

    static Model create(const ModelConfig& cfg, std::mt19937_64& rng);
    std::vector<ad::Tensor*> params();
    std::vector<const ad::Tensor*> params() const;
};

struct ElboBreakdown {
    double reconstruction = 0.0;
    double regularizer = 0.0;
    double total = 0.0;
};

// Single-example API.
GaussianParams encode(const Mlp& enc, const Eigen::VectorXd& x, double y_c);
Eigen::VectorXd reparameterize(const GaussianParams& p, const Eigen::VectorXd& noise);
double gaussian_kl(const GaussianParams& q, const GaussianParams& p);

// Tape-level pieces. Rows are examples.
struct GaussianVars {
    ad::Var mean;
    ad::Var log_var;
};

GaussianVars encode(ad::Tape& tape, Mlp& enc, const Matrix& x, const Matrix& y_c);
GaussianVars split_gaussian(ad::Var out, std::size_t latent_dim);
ad::Var reparameterize(ad::Tape& tape, const GaussianVars& p, const Matrix& noise);
// Per-row Gaussian log-likelihood of x under mean `x_hat` with unit variance.
ad::Var gaussian_log_likelihood(ad::Tape& tape, ad::Var x_hat, const Matrix& x);
// Per-row closed-form KL(q || N(0, I)).
ad::Var standard_normal_kl(const GaussianVars& q);

// Draws y_{-c} replacements as rows of the training factor matrix.
class FactorSampler {
public:
    FactorSampler(const Matrix& y, const Matrix* u = nullptr);
    std::vector<std::size_t> draw(std::size_t count, std::mt19937_64& rng) const;
    const Matrix& y() const { return y_; }
    const Matrix* u() const { return u_; }

private:
    const Matrix& y_;
    const Matrix* u_;
};

// Noise for one ReI evaluation: `eps` holds z_draws stacked blocks of
// batch x latent normals; `rows` holds batch x S sampler row indices.
struct ReiNoise {
    Matrix eps;
    std::vector<std::size_t> rows;
};

ReiNoise draw_rei_noise(std::size_t batch, std::size_t latent, std::size_t z_draws, std::size_t S,
                        const FactorSampler& sampler, std::mt19937_64& rng);

// Builds the S PriorNet inputs per example: sampler rows with column c
// replaced by the example's own y_c (u columns from the sampled row).
Matrix prior_inputs(const Matrix& y, std::size_t c, const FactorSampler& sampler, const std::vector<std::size_t>& rows,
                    std::size_t S, bool with_u);

// Per-row MC estimate of KL(q(z|x,y_c) || (1/S) sum_s p(z | y_c, y_{-c}^(s))),
// averaged over the z draws in `noise`.
ad::Var rei_regularizer(ad::Tape& tape, Model& model, const GaussianVars& q, const Matrix& y, std::size_t c,
                        const FactorSampler& sampler, const ReiNoise& noise);

struct BatchTerms {
    ad::Var reconstruction;  // 1x1, batch mean
    ad::Var regularizer;     // 1x1, batch mean
    ad::Var total;           // 1x1, batch mean of reconstruction - lambda * regularizer
};

BatchTerms elbo_standard(ad::Tape& tape, Model& model, const Matrix& x, const Matrix& noise);
BatchTerms elbo_rei(ad::Tape& tape, Model& model, const Matrix& x, const Matrix& y, std::size_t c,
                    const FactorSampler& sampler, const ReiNoise& noise);

// One training objective for a batch: elbo_standard in Vae mode, the mean of
// elbo_rei over all factor indices otherwise.
BatchTerms batch_objective(ad::Tape& tape, Model& model, const Matrix& x, const Matrix& y, const FactorSampler& sampler,
                           std::mt19937_64& rng);

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    ad::AdamConfig adam{};
};

struct TraceRow {
    std::size_t epoch = 0;
    double reconstruction = 0.0;
    double regularizer = 0.0;
    double total = 0.0;
    std::vector<double> batch_totals;  // per-batch objective, in batch order
};

struct TrainData {
    const Matrix& x;
    const Matrix& y;
    const Matrix* u = nullptr;
};

std::vector<TraceRow> train(Model& model, const TrainData& data, const TrainConfig& cfg, std::uint64_t seed);

// Average of L reparameterized draws from q(z | x, y_c), one row per example.
Matrix represent(const Mlp& enc, const Matrix& x, const Matrix& y_c, std::size_t L, std::mt19937_64& rng);

// Evaluation representation of a dataset: for the baseline the encoding with
// the y_c slot at 0; for rei modes the per-factor encodings concatenated.
Matrix representation(const Model& model, const Matrix& x, const Matrix& y, std::size_t L, std::uint64_t seed);

// Bundle = checkpoint (model.ckpt) + loss trace (loss_trace.csv) + bundle.json.
void write_loss_trace(const std::filesystem::path& path, const std::vector<TraceRow>& trace);
void save_bundle(const std::filesystem::path& dir, const Model& model, const std::vector<TraceRow>& trace,
                 std::uint64_t seed, const TrainConfig& cfg);
Model load_bundle(const std::filesystem::path& dir);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace rei::vae
