#include "rei/vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "rei/errors.hpp"

namespace rei::vae {

namespace {

using ad::Tape;
using ad::Var;
using nlohmann::json;

constexpr double kLog2Pi = 1.8378770664093453;

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

Matrix with_column(const Matrix& x, const Matrix& col) {
    if (col.rows() != x.rows() || col.cols() != 1) throw ShapeMismatch("conditioning column must be rows x 1");
    Matrix out(x.rows(), x.cols() + 1);
    out.leftCols(x.cols()) = x;
    out.col(x.cols()) = col.col(0);
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

BatchTerms batch_terms(Var recon_rows, Var reg_rows, double lambda) {
    const Var r = ad::mean(recon_rows);
    const Var g = ad::mean(reg_rows);
    return {r, g, ad::sub(r, ad::scale(g, lambda))};
}

// Decoder input: z, or z ⧺ y_c when so configured.
Var decode(Tape& tape, Model& model, Var z, const Matrix& y_c) {
    if (!model.config.decoder_uses_yc) return model.decoder.forward(tape, z);
    return model.decoder.forward(tape, ad::concat_cols({z, tape.constant(y_c)}));
}

Var log_q(Tape& tape, const GaussianVars& q, const Matrix& eps) {
    // log N(z; mean, exp(log_var)) at z = mean + exp(log_var/2) * eps.
    const double d = static_cast<double>(eps.cols());
    Matrix c(eps.rows(), 1);
    c.col(0) = -0.5 * eps.cwiseAbs2().rowwise().sum().array() - 0.5 * d * kLog2Pi;
    return ad::add(tape.constant(c), ad::scale(ad::sum_cols(q.log_var), -0.5));
}

Var rei_regularizer_from(Tape& tape, Model& model, const GaussianVars& q, const std::vector<Var>& zs,
                         const std::vector<Matrix>& eps, const Matrix& y, std::size_t c, const FactorSampler& sampler,
                         const std::vector<std::size_t>& rows) {
    if (!model.prior) throw ShapeMismatch("model has no PriorNet");
    const Eigen::Index B = y.rows();
    if (rows.empty() || rows.size() % static_cast<std::size_t>(B) != 0) throw EmptySampler("no sampler rows for the mixture");
    const std::size_t S = rows.size() / static_cast<std::size_t>(B);
    const std::size_t d = model.config.latent();
    const bool with_u = model.config.mode == Mode::ReiNoise;
    const Var prior_out = model.prior->forward(tape, tape.constant(prior_inputs(y, c, sampler, rows, S, with_u)));
    const GaussianVars p = split_gaussian(prior_out, d);
    const Var inv_var = ad::exp(ad::neg(p.log_var));
    const Var lp_rows = ad::sum_cols(p.log_var);

    Var acc;
    for (std::size_t k = 0; k < zs.size(); ++k) {
        const Var zr = ad::repeat_rows(zs[k], static_cast<Eigen::Index>(S));
        const Var quad = ad::sum_cols(ad::mul(ad::square(ad::sub(zr, p.mean)), inv_var));
        const Var log_comp = ad::add_scalar(ad::scale(ad::add(quad, lp_rows), -0.5), -0.5 * static_cast<double>(d) * kLog2Pi);
        const Var log_m = ad::add_scalar(ad::logsumexp_cols(ad::reshape(log_comp, B, static_cast<Eigen::Index>(S))),
                                         -std::log(static_cast<double>(S)));
        const Var term = ad::sub(log_q(tape, q, eps[k]), log_m);
        acc = k == 0 ? term : ad::add(acc, term);
    }
    return ad::scale(acc, 1.0 / static_cast<double>(zs.size()));
}

std::vector<Matrix> split_draws(const Matrix& eps, Eigen::Index batch, std::size_t latent) {
    if (eps.cols() != static_cast<Eigen::Index>(latent) || batch == 0 || eps.rows() % batch != 0 || eps.rows() == 0) {
        throw ShapeMismatch("noise must stack whole batch x latent blocks");
    }
    std::vector<Matrix> out;
    for (Eigen::Index k = 0; k < eps.rows() / batch; ++k) out.push_back(eps.middleRows(k * batch, batch));
    return out;
}

json config_json(const ModelConfig& c) {
    return json{{"mode", mode_name(c.mode)},
                {"obs_dim", c.obs_dim},
                {"n_factors", c.n_factors},
                {"latent_dim", c.latent()},
                {"hidden", c.hidden},
                {"lambda", c.lambda},
                {"mc_samples", c.mc_samples},
                {"z_draws", c.z_draws},
                {"decoder_uses_yc", c.decoder_uses_yc}};
}

ModelConfig config_from(const json& j) {
    static const std::vector<std::string> known = {"mode",   "obs_dim",    "n_factors", "latent_dim",     "hidden",
                                                   "lambda", "mc_samples", "z_draws",   "decoder_uses_yc"};
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown model config key '" + k + "'");
    }
    ModelConfig c;
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.obs_dim = j.at("obs_dim").get<std::size_t>();
    c.n_factors = j.at("n_factors").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.lambda = j.at("lambda").get<double>();
    c.mc_samples = j.at("mc_samples").get<std::size_t>();
    c.z_draws = j.at("z_draws").get<std::size_t>();
    c.decoder_uses_yc = j.at("decoder_uses_yc").get<bool>();
    return c;
}

}  // namespace

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::Vae: return "vae";
        case Mode::Rei: return "rei";
        case Mode::ReiNoise: return "rei-noise";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "vae") return Mode::Vae;
    if (s == "rei") return Mode::Rei;
    if (s == "rei-noise") return Mode::ReiNoise;
    throw ConfigError("unknown mode '" + s + "' (expected vae, rei or rei-noise)");
}

Mlp Mlp::create(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                std::mt19937_64& rng) {
    Mlp m;
    std::vector<std::size_t> widths = {in};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(out);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        std::uniform_real_distribution<double> u(-bound, bound);
        Matrix w(widths[l], widths[l + 1]);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
        Matrix b(1, widths[l + 1]);
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
        m.weights.emplace_back(name + ".w" + std::to_string(l), std::move(w));
        m.biases.emplace_back(name + ".b" + std::to_string(l), std::move(b));
    }
    return m;
}

Var Mlp::forward(Tape& tape, Var input) {
    if (input.cols() != static_cast<Eigen::Index>(input_dim())) {
        throw ShapeMismatch("network expects " + std::to_string(input_dim()) + " inputs, got " + std::to_string(input.cols()));
    }
    Var h = input;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = ad::add(ad::matmul(h, tape.param(weights[l])), tape.param(biases[l]));
        if (l + 1 < weights.size()) h = ad::relu(h);
    }
    return h;
}

Matrix Mlp::forward(const Matrix& input) const {
    if (input.cols() != static_cast<Eigen::Index>(input_dim())) {
        throw ShapeMismatch("network expects " + std::to_string(input_dim()) + " inputs, got " + std::to_string(input.cols()));
    }
    Matrix h = input;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Matrix next = (h * weights[l].value).rowwise() + biases[l].value.row(0);
        if (l + 1 < weights.size()) next = next.cwiseMax(0.0);
        h = std::move(next);
    }
    return h;
}

std::vector<ad::Tensor*> Mlp::params() {
    std::vector<ad::Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

std::vector<const ad::Tensor*> Mlp::params() const {
    std::vector<const ad::Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

void Mlp::zero() {
    for (auto* p : params()) p->value.setZero();
}

Model Model::create(const ModelConfig& cfg, std::mt19937_64& rng) {
    if (cfg.obs_dim == 0 || cfg.n_factors == 0) throw ConfigError("obs_dim and n_factors must be positive");
    if (cfg.mc_samples == 0) throw ConfigError("mc_samples must be >= 1");
    if (cfg.z_draws == 0) throw ConfigError("z_draws must be >= 1");
    if (!(cfg.lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
    Model m;
    m.config = cfg;
    const std::size_t d = cfg.latent();
    m.encoder = Mlp::create("encoder", cfg.obs_dim + 1, cfg.hidden, 2 * d, rng);
    m.decoder = Mlp::create("decoder", d + (cfg.decoder_uses_yc ? 1 : 0), cfg.hidden, cfg.obs_dim, rng);
    if (cfg.mode != Mode::Vae) m.prior = Mlp::create("prior", cfg.prior_input_dim(), cfg.hidden, 2 * d, rng);
    return m;
}

std::vector<ad::Tensor*> Model::params() {
    auto out = encoder.params();
    for (auto* p : decoder.params()) out.push_back(p);
    if (prior) {
        for (auto* p : prior->params()) out.push_back(p);
    }
    return out;
}

std::vector<const ad::Tensor*> Model::params() const {
    auto out = encoder.params();
    for (auto* p : decoder.params()) out.push_back(p);
    if (prior) {
        for (auto* p : prior->params()) out.push_back(p);
    }
    return out;
}

GaussianParams encode(const Mlp& enc, const Eigen::VectorXd& x, double y_c) {
    Matrix in(1, x.size() + 1);
    in.leftCols(x.size()) = x.transpose();
    in(0, x.size()) = y_c;
    const Matrix out = enc.forward(in);
    if (out.cols() % 2 != 0) throw ShapeMismatch("encoder output width must be even");
    const Eigen::Index d = out.cols() / 2;
    GaussianParams p;
    p.mean = out.leftCols(d).row(0).transpose();
    p.log_var = out.rightCols(d).row(0).transpose().cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
    return p;
}

Eigen::VectorXd reparameterize(const GaussianParams& p, const Eigen::VectorXd& noise) {
    if (noise.size() != p.mean.size() || p.log_var.size() != p.mean.size()) throw ShapeMismatch("noise/latent size mismatch");
    return p.mean.array() + (0.5 * p.log_var.array()).exp() * noise.array();
}

double gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
    if (q.mean.size() != p.mean.size() || q.log_var.size() != q.mean.size() || p.log_var.size() != p.mean.size()) {
        throw ShapeMismatch("gaussian_kl dimension mismatch");
    }
    const auto dv = (q.log_var - p.log_var).array();
    const auto dm = (q.mean - p.mean).array();
    const double kl = 0.5 * (dv.exp() + dm.square() / p.log_var.array().exp() - 1.0 - dv).sum();
    return std::max(kl, 0.0);
}

GaussianVars split_gaussian(Var out, std::size_t latent_dim) {
    const auto d = static_cast<Eigen::Index>(latent_dim);
    if (out.cols() != 2 * d) throw ShapeMismatch("Gaussian head must have 2 x latent columns");
    return {ad::slice_cols(out, 0, d), ad::clamp(ad::slice_cols(out, d, d), kLogVarMin, kLogVarMax)};
}

GaussianVars encode(Tape& tape, Mlp& enc, const Matrix& x, const Matrix& y_c) {
    const Var out = enc.forward(tape, tape.constant(with_column(x, y_c)));
    return split_gaussian(out, enc.output_dim() / 2);
}

Var reparameterize(Tape& tape, const GaussianVars& p, const Matrix& noise) {
    if (noise.rows() != p.mean.rows() || noise.cols() != p.mean.cols()) throw ShapeMismatch("noise shape mismatch");
    return ad::add(p.mean, ad::mul(ad::exp(ad::scale(p.log_var, 0.5)), tape.constant(noise)));
}

Var gaussian_log_likelihood(Tape& tape, Var x_hat, const Matrix& x) {
    if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw ShapeMismatch("reconstruction shape mismatch");
    const Var sq = ad::sum_cols(ad::square(ad::sub(x_hat, tape.constant(x))));
    return ad::add_scalar(ad::scale(sq, -0.5), -0.5 * static_cast<double>(x.cols()) * kLog2Pi);
}

Var standard_normal_kl(const GaussianVars& q) {
    const Var inner = ad::sub(ad::add(ad::square(q.mean), ad::exp(q.log_var)), q.log_var);
    return ad::scale(ad::add_scalar(ad::sum_cols(inner), -static_cast<double>(q.mean.cols())), 0.5);
}

FactorSampler::FactorSampler(const Matrix& y, const Matrix* u) : y_(y), u_(u) {
    if (y_.rows() == 0) throw EmptySampler("factor sampler needs at least one row");
    if (u_ && u_->rows() != y_.rows()) throw ShapeMismatch("u and y row counts differ");
}

std::vector<std::size_t> FactorSampler::draw(std::size_t count, std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(y_.rows()) - 1);
    std::vector<std::size_t> out(count);
    for (auto& r : out) r = pick(rng);
    return out;
}

ReiNoise draw_rei_noise(std::size_t batch, std::size_t latent, std::size_t z_draws, std::size_t S,
                        const FactorSampler& sampler, std::mt19937_64& rng) {
    ReiNoise n;
    n.eps = standard_normal(static_cast<Eigen::Index>(batch * z_draws), static_cast<Eigen::Index>(latent), rng);
    n.rows = sampler.draw(batch * S, rng);
    return n;
}

Matrix prior_inputs(const Matrix& y, std::size_t c, const FactorSampler& sampler, const std::vector<std::size_t>& rows,
                    std::size_t S, bool with_u) {
    const Eigen::Index n = sampler.y().cols();
    if (y.cols() != n) throw ShapeMismatch("factor width differs from the sampler's");
    if (c >= static_cast<std::size_t>(n)) throw ShapeMismatch("factor index out of range");
    if (with_u && !sampler.u()) throw ShapeMismatch("noise channel requested but the sampler has no u");
    if (rows.size() != static_cast<std::size_t>(y.rows()) * S) throw ShapeMismatch("sampler row count mismatch");
    const Eigen::Index m = with_u ? sampler.u()->cols() : 0;
    Matrix in(static_cast<Eigen::Index>(rows.size()), n + m);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        const auto src = static_cast<Eigen::Index>(rows[r]);
        in.row(i).head(n) = sampler.y().row(src);
        in(i, static_cast<Eigen::Index>(c)) = y(static_cast<Eigen::Index>(r / S), static_cast<Eigen::Index>(c));
        if (with_u) in.row(i).tail(m) = sampler.u()->row(src);
    }
    return in;
}

Var rei_regularizer(Tape& tape, Model& model, const GaussianVars& q, const Matrix& y, std::size_t c,
                    const FactorSampler& sampler, const ReiNoise& noise) {
    const auto eps = split_draws(noise.eps, y.rows(), model.config.latent());
    std::vector<Var> zs;
    for (const auto& e : eps) zs.push_back(reparameterize(tape, q, e));
    return rei_regularizer_from(tape, model, q, zs, eps, y, c, sampler, noise.rows);
}

BatchTerms elbo_standard(Tape& tape, Model& model, const Matrix& x, const Matrix& noise) {
    const Matrix zero = Matrix::Zero(x.rows(), 1);
    const GaussianVars q = encode(tape, model.encoder, x, zero);
    const Var z = reparameterize(tape, q, noise);
    const Var recon = gaussian_log_likelihood(tape, decode(tape, model, z, zero), x);
    return batch_terms(recon, standard_normal_kl(q), model.config.lambda);
}

BatchTerms elbo_rei(Tape& tape, Model& model, const Matrix& x, const Matrix& y, std::size_t c,
                    const FactorSampler& sampler, const ReiNoise& noise) {
    if (x.rows() != y.rows()) throw ShapeMismatch("x and y row counts differ");
    if (c >= static_cast<std::size_t>(y.cols())) throw ShapeMismatch("factor index out of range");
    const Matrix y_c = y.col(static_cast<Eigen::Index>(c));
    const GaussianVars q = encode(tape, model.encoder, x, y_c);
    const auto eps = split_draws(noise.eps, x.rows(), model.config.latent());
    std::vector<Var> zs;
    for (const auto& e : eps) zs.push_back(reparameterize(tape, q, e));
    const Var recon = gaussian_log_likelihood(tape, decode(tape, model, zs.front(), y_c), x);
    const Var reg = rei_regularizer_from(tape, model, q, zs, eps, y, c, sampler, noise.rows);
    return batch_terms(recon, reg, model.config.lambda);
}

BatchTerms batch_objective(Tape& tape, Model& model, const Matrix& x, const Matrix& y, const FactorSampler& sampler,
                           std::mt19937_64& rng) {
    const std::size_t d = model.config.latent();
    if (model.config.mode == Mode::Vae) {
        return elbo_standard(tape, model, x, standard_normal(x.rows(), static_cast<Eigen::Index>(d), rng));
    }
    const auto n = static_cast<std::size_t>(y.cols());
    BatchTerms acc;
    for (std::size_t c = 0; c < n; ++c) {
        const ReiNoise noise = draw_rei_noise(static_cast<std::size_t>(x.rows()), d, model.config.z_draws,
                                              model.config.mc_samples, sampler, rng);
        const BatchTerms t = elbo_rei(tape, model, x, y, c, sampler, noise);
        if (c == 0) {
            acc = t;
        } else {
            acc.reconstruction = ad::add(acc.reconstruction, t.reconstruction);
            acc.regularizer = ad::add(acc.regularizer, t.regularizer);
            acc.total = ad::add(acc.total, t.total);
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    return {ad::scale(acc.reconstruction, inv), ad::scale(acc.regularizer, inv), ad::scale(acc.total, inv)};
}

std::vector<TraceRow> train(Model& model, const TrainData& data, const TrainConfig& cfg, std::uint64_t seed) {
    const auto N = static_cast<std::size_t>(data.x.rows());
    if (N == 0) throw EmptyDataset("training set is empty");
    if (data.y.rows() != data.x.rows()) throw ShapeMismatch("x and y row counts differ");
    if (data.x.cols() != static_cast<Eigen::Index>(model.config.obs_dim) ||
        data.y.cols() != static_cast<Eigen::Index>(model.config.n_factors)) {
        throw ShapeMismatch("dataset dimensions do not match the model");
    }
    if (model.config.mode == Mode::ReiNoise && !data.u) throw ShapeMismatch("rei-noise mode needs the exported u");
    if (cfg.batch_size == 0 || cfg.batch_size > N) throw ConfigError("batch size must be in [1, N]");

    std::seed_seq seq{seed, std::uint64_t{0x7472616e}};
    std::mt19937_64 rng(seq);
    const FactorSampler sampler(data.y, data.u);
    auto params = model.params();
    auto state = ad::adam_init(params);
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);

    std::vector<TraceRow> trace;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        TraceRow row;
        row.epoch = epoch;
        for (std::size_t start = 0; start < N; start += cfg.batch_size) {
            const std::size_t B = std::min(cfg.batch_size, N - start);
            Matrix xb(B, data.x.cols()), yb(B, data.y.cols());
            for (std::size_t i = 0; i < B; ++i) {
                xb.row(static_cast<Eigen::Index>(i)) = data.x.row(static_cast<Eigen::Index>(order[start + i]));
                yb.row(static_cast<Eigen::Index>(i)) = data.y.row(static_cast<Eigen::Index>(order[start + i]));
            }
            Tape tape;
            const BatchTerms t = batch_objective(tape, model, xb, yb, sampler, rng);
            for (auto* p : params) p->zero_grad();
            tape.backward(ad::neg(t.total));
            ad::adam_step(params, state, cfg.adam);
            const double w = static_cast<double>(B) / static_cast<double>(N);
            row.reconstruction += w * t.reconstruction.item();
            row.regularizer += w * t.regularizer.item();
            row.total += w * t.total.item();
            row.batch_totals.push_back(t.total.item());
        }
        trace.push_back(row);
    }
    return trace;
}

Matrix represent(const Mlp& enc, const Matrix& x, const Matrix& y_c, std::size_t L, std::mt19937_64& rng) {
    if (L == 0) throw ShapeMismatch("represent needs L >= 1");
    const Matrix out = enc.forward(with_column(x, y_c));
    const Eigen::Index d = out.cols() / 2;
    const Matrix mean = out.leftCols(d);
    const Matrix sd = (0.5 * out.rightCols(d).array().max(kLogVarMin).min(kLogVarMax)).exp().matrix();
    Matrix acc = Matrix::Zero(x.rows(), d);
    for (std::size_t l = 0; l < L; ++l) acc += mean + sd.cwiseProduct(standard_normal(x.rows(), d, rng));
    return acc / static_cast<double>(L);
}

Matrix representation(const Model& model, const Matrix& x, const Matrix& y, std::size_t L, std::uint64_t seed) {
    std::seed_seq seq{seed, std::uint64_t{0x72657072}};
    std::mt19937_64 rng(seq);
    if (model.config.mode == Mode::Vae) return represent(model.encoder, x, Matrix::Zero(x.rows(), 1), L, rng);
    if (y.rows() != x.rows()) throw ShapeMismatch("x and y row counts differ");
    const Eigen::Index d = static_cast<Eigen::Index>(model.config.latent());
    Matrix out(x.rows(), d * y.cols());
    for (Eigen::Index c = 0; c < y.cols(); ++c) out.middleCols(c * d, d) = represent(model.encoder, x, y.col(c), L, rng);
    return out;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "epoch,reconstruction,regularizer,total\n";
    for (const auto& r : trace) {
        os << r.epoch << ',' << fmt(r.reconstruction) << ',' << fmt(r.regularizer) << ',' << fmt(r.total) << '\n';
    }
}

void save_bundle(const std::filesystem::path& dir, const Model& model, const std::vector<TraceRow>& trace,
                 std::uint64_t seed, const TrainConfig& cfg) {
    std::filesystem::create_directories(dir);
    json meta;
    meta["config"] = config_json(model.config);
    meta["train"] = {{"epochs", cfg.epochs},
                     {"batch_size", cfg.batch_size},
                     {"lr", cfg.adam.lr},
                     {"beta1", cfg.adam.beta1},
                     {"beta2", cfg.adam.beta2},
                     {"eps", cfg.adam.eps}};
    meta["seed"] = seed;
    meta["epoch"] = trace.empty() ? 0 : trace.back().epoch;
    meta["checkpoint"] = "model.ckpt";
    meta["loss_trace"] = "loss_trace.csv";
    ad::save_checkpoint(dir / "model.ckpt", model.params(), seed, json{{"config", meta["config"]}}.dump());
    write_loss_trace(dir / "loss_trace.csv", trace);
    std::ofstream os(dir / "bundle.json", std::ios::trunc);
    if (!os) throw FormatError("cannot write bundle manifest in " + dir.string());
    os << meta.dump(2) << '\n';
}

Model load_bundle(const std::filesystem::path& dir) {
    std::ifstream is(dir / "bundle.json");
    if (!is) throw FormatError("no bundle.json in " + dir.string());
    json meta;
    try {
        meta = json::parse(is);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad bundle.json: ") + e.what());
    }
    std::mt19937_64 rng(0);
    Model model = Model::create(config_from(meta.at("config")), rng);
    const auto ck = ad::load_checkpoint(dir / meta.at("checkpoint").get<std::string>());
    auto params = model.params();
    if (ck.tensors.size() != params.size()) throw FormatError("checkpoint tensor count does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = ck.tensors[i];
        if (t.name != params[i]->name || t.value.rows() != params[i]->value.rows() || t.value.cols() != params[i]->value.cols()) {
            throw FormatError("checkpoint tensor '" + t.name + "' does not match '" + params[i]->name + "'");
        }
        params[i]->value = t.value;
    }
    return model;
}

std::string model_config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

ModelConfig model_config_from_json(const std::string& text) {
    try {
        return config_from(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
}

}  // namespace rei::vae
