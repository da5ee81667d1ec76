#include "rei/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "rei/errors.hpp"

namespace rei::synth {

namespace {

using nlohmann::json;

constexpr std::uint64_t kFactorStream = 0x666163746f7273;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365;
constexpr std::size_t kMaxDiscreteX = 64;

double kernel(double a, double b, double sigma) { return std::exp(-(a - b) * (a - b) / (2.0 * sigma * sigma)); }

// Acceptance weight of a normalized factor vector under all correlation terms.
double acceptance(const GenSpec& spec, const double* y) {
    double w = 1.0;
    for (const auto& p : spec.corr_pairs) w *= kernel(y[p.i], y[p.j], p.sigma);
    if (spec.one_to_all) {
        for (std::size_t j = 0; j < spec.n_factors; ++j) {
            if (j != spec.one_to_all->i) w *= kernel(y[spec.one_to_all->i], y[j], spec.one_to_all->sigma);
        }
    }
    return w;
}

double normalized_level(std::size_t k, std::size_t levels) {
    return levels <= 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(levels - 1);
}

std::string render_name(DiscreteRender r) {
    switch (r) {
        case DiscreteRender::Sum: return "sum";
        case DiscreteRender::Or: return "or";
        case DiscreteRender::Index: return "index";
    }
    return "?";
}

DiscreteRender parse_render(const std::string& s) {
    if (s == "sum") return DiscreteRender::Sum;
    if (s == "or") return DiscreteRender::Or;
    if (s == "index") return DiscreteRender::Index;
    throw BadSpec("unknown discrete_render '" + s + "' (expected sum, or, index)");
}

json spec_json(const GenSpec& s) {
    json j;
    j["n_factors"] = s.n_factors;
    j["factor_levels"] = s.factor_levels;
    json pairs = json::array();
    for (const auto& p : s.corr_pairs) pairs.push_back(json::array({p.i, p.j, p.sigma}));
    j["corr_pairs"] = pairs;
    j["one_to_all"] = s.one_to_all ? json::array({s.one_to_all->i, s.one_to_all->sigma}) : json(nullptr);
    j["noise_std"] = s.noise_std;
    j["obs_dim"] = s.obs_dim;
    j["mixing_seed"] = s.mixing_seed;
    j["mixing_gains"] = s.mixing_gains;
    j["discrete_render"] = render_name(s.discrete_render);
    return j;
}

GenSpec spec_from(const json& j) {
    static const std::set<std::string> known = {"n_factors",   "factor_levels", "corr_pairs",   "one_to_all",
                                                "noise_std",   "obs_dim",       "mixing_seed",  "mixing_gains",
                                                "discrete_render"};
    if (!j.is_object()) throw BadSpec("spec must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) throw BadSpec("unknown spec key '" + k + "'");
    }
    GenSpec s;
    s.n_factors = j.at("n_factors").get<std::size_t>();
    s.obs_dim = j.at("obs_dim").get<std::size_t>();
    if (j.contains("factor_levels")) s.factor_levels = j["factor_levels"].get<std::vector<std::size_t>>();
    if (j.contains("corr_pairs")) {
        for (const auto& p : j["corr_pairs"]) {
            if (!p.is_array() || p.size() != 3) throw BadSpec("corr_pairs entries are [i, j, sigma]");
            s.corr_pairs.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>(), p[2].get<double>()});
        }
    }
    if (j.contains("one_to_all") && !j["one_to_all"].is_null()) {
        const auto& o = j["one_to_all"];
        if (!o.is_array() || o.size() != 2) throw BadSpec("one_to_all is [i, sigma]");
        s.one_to_all = OneToAll{o[0].get<std::size_t>(), o[1].get<double>()};
    }
    if (j.contains("noise_std")) s.noise_std = j["noise_std"].get<double>();
    if (j.contains("mixing_seed")) s.mixing_seed = j["mixing_seed"].get<std::uint64_t>();
    if (j.contains("mixing_gains")) s.mixing_gains = j["mixing_gains"].get<std::vector<double>>();
    if (j.contains("discrete_render")) s.discrete_render = parse_render(j["discrete_render"].get<std::string>());
    s.validate();
    return s;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_matrix(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    Matrix m(rows, cols);
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
        throw FormatError("truncated matrix file " + path.string());
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
    return m;
}

std::string checksum(const Matrix& m) { return fnv1a_hex(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double)); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::size_t GenSpec::levels(std::size_t factor) const { return factor_levels.empty() ? 0 : factor_levels.at(factor); }

void GenSpec::validate() const {
    if (n_factors < 1) throw BadSpec("n_factors must be >= 1");
    if (obs_dim < 1) throw BadSpec("obs_dim must be >= 1");
    if (obs_dim < n_factors) throw BadSpec("obs_dim must be >= n_factors for column-orthogonal mixing");
    if (!factor_levels.empty() && factor_levels.size() != n_factors) throw BadSpec("factor_levels needs one entry per factor");
    for (std::size_t l : factor_levels) {
        if (l == 1) throw BadSpec("a discrete factor needs at least 2 levels");
    }
    for (const auto& p : corr_pairs) {
        if (p.i >= n_factors || p.j >= n_factors) throw BadSpec("corr_pairs index out of range");
        if (p.i == p.j) throw BadSpec("corr_pairs indices must be distinct");
        if (!(p.sigma > 0.0)) throw BadSpec("corr_pairs sigma must be positive");
    }
    if (one_to_all) {
        if (one_to_all->i >= n_factors) throw BadSpec("one_to_all index out of range");
        if (!(one_to_all->sigma > 0.0)) throw BadSpec("one_to_all sigma must be positive");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw BadSpec("noise_std must be a nonnegative number");
    if (!mixing_gains.empty() && mixing_gains.size() != n_factors) throw BadSpec("mixing_gains needs one entry per factor");
    for (double g : mixing_gains) {
        if (!std::isfinite(g)) throw BadSpec("mixing_gains must be finite");
    }
}

std::string spec_to_json(const GenSpec& spec) { return spec_json(spec).dump(2) + "\n"; }

GenSpec spec_from_json(const std::string& text) {
    try {
        return spec_from(json::parse(text));
    } catch (const json::exception& e) {
        throw BadSpec(std::string("bad spec: ") + e.what());
    }
}

GenSpec load_spec(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open spec " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return spec_from_json(text);
}

Matrix sample_factors(const GenSpec& spec, std::size_t N, std::uint64_t seed) {
    spec.validate();
    if (N < 1) throw BadSpec("N must be >= 1");
    std::seed_seq seq{seed, kFactorStream};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = spec.n_factors;
    Matrix y(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(n));
    std::vector<double> row(n);
    const std::size_t max_attempts = std::max<std::size_t>(N, 1000) * 100000;
    std::size_t attempts = 0;
    for (std::size_t r = 0; r < N;) {
        if (++attempts > max_attempts) throw BadSpec("rejection sampler acceptance rate is too low");
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t L = spec.levels(k);
            if (L == 0) {
                row[k] = unit(rng);
            } else {
                std::uniform_int_distribution<std::size_t> pick(0, L - 1);
                row[k] = normalized_level(pick(rng), L);
            }
        }
        const bool correlated = !spec.corr_pairs.empty() || spec.one_to_all;
        if (correlated && unit(rng) >= acceptance(spec, row.data())) continue;
        for (std::size_t k = 0; k < n; ++k) y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = row[k];
        ++r;
    }
    return y;
}

Matrix mixing_matrix(const GenSpec& spec) {
    spec.validate();
    const auto M = static_cast<Eigen::Index>(spec.obs_dim);
    const auto n = static_cast<Eigen::Index>(spec.n_factors);
    std::mt19937_64 rng(spec.mixing_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(M, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < M; ++i) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(M, n);
    const Eigen::MatrixXd R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j) {
        double s = R(j, j) < 0 ? -1.0 : 1.0;
        if (!spec.mixing_gains.empty()) s *= spec.mixing_gains[static_cast<std::size_t>(j)];
        q.col(j) *= s;
    }
    return q;
}

Rendered render(const GenSpec& spec, const Matrix& y, std::uint64_t seed) {
    if (y.cols() != static_cast<Eigen::Index>(spec.n_factors)) throw ShapeMismatch("factor matrix width differs from n_factors");
    const Matrix A = mixing_matrix(spec);
    Rendered out;
    out.u = Matrix::Zero(y.rows(), static_cast<Eigen::Index>(spec.obs_dim));
    if (spec.noise_std > 0.0) {
        std::seed_seq seq{seed, kNoiseStream};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal(0.0, spec.noise_std);
        for (Eigen::Index i = 0; i < out.u.size(); ++i) out.u.data()[i] = normal(rng);
    }
    out.x = (y * A.transpose()).array().tanh().matrix() + out.u;
    return out;
}

Dataset generate(const GenSpec& spec, std::size_t N, std::uint64_t seed) {
    Dataset d;
    d.spec = spec;
    d.seed = seed;
    d.y = sample_factors(spec, N, seed);
    auto r = render(spec, d.y, seed);
    d.x = std::move(r.x);
    d.u = std::move(r.u);
    return d;
}

DiscreteModel discretize_to_model(const GenSpec& spec) {
    spec.validate();
    const std::size_t n = spec.n_factors;
    std::vector<std::size_t> L(n);
    for (std::size_t k = 0; k < n; ++k) {
        L[k] = spec.levels(k);
        if (L[k] == 0) throw BadSpec("continuous factor y" + std::to_string(k + 1) + " cannot be discretized");
        if (L[k] > 4) throw BadSpec("discretization supports at most 4 levels per factor");
    }
    std::size_t x_states = 0;
    switch (spec.discrete_render) {
        case DiscreteRender::Or:
            for (std::size_t l : L) {
                if (l != 2) throw BadSpec("the OR render needs binary factors");
            }
            x_states = 2;
            break;
        case DiscreteRender::Sum:
            x_states = 1;
            for (std::size_t l : L) x_states += l - 1;
            break;
        case DiscreteRender::Index:
            x_states = 1;
            for (std::size_t l : L) {
                x_states *= l;
                if (x_states > kMaxDiscreteX) break;
            }
            break;
    }
    if (x_states > kMaxDiscreteX) throw BadSpec("discrete x would need more than 64 states");

    auto name = [](std::size_t k) { return "y" + std::to_string(k + 1); };
    std::set<std::size_t> correlated;
    for (const auto& p : spec.corr_pairs) correlated.insert({p.i, p.j});
    if (spec.one_to_all) {
        for (std::size_t k = 0; k < n; ++k) correlated.insert(k);
    }
    const std::vector<std::size_t> corr(correlated.begin(), correlated.end());
    const bool noisy = spec.noise_std > 0.0;

    std::vector<std::string> nodes;
    std::vector<Edge> edges;
    std::vector<VarSpec> vars;
    std::map<std::string, Cpt> cpts;
    if (!corr.empty()) {
        nodes.push_back("h_corr");
        std::size_t states = 1;
        for (std::size_t k : corr) states *= L[k];
        // Joint of the correlated factors: uniform base times the kernel weights.
        std::vector<double> weights(states);
        std::vector<double> y(n, 0.0);
        double total = 0.0;
        for (std::size_t h = 0; h < states; ++h) {
            std::size_t rest = h;
            for (std::size_t idx = corr.size(); idx-- > 0;) {
                const std::size_t k = corr[idx];
                y[k] = normalized_level(rest % L[k], L[k]);
                rest /= L[k];
            }
            weights[h] = acceptance(spec, y.data());
            total += weights[h];
        }
        for (double& w : weights) w /= total;
        vars.push_back({"h_corr", states});
        cpts["h_corr"] = Cpt{"h_corr", {}, states, weights};
    }
    for (std::size_t k = 0; k < n; ++k) {
        nodes.push_back(name(k));
        vars.push_back({name(k), L[k]});
        edges.emplace_back(name(k), "x");
    }
    // Factor CPTs: deterministic digit of h_corr, or uniform.
    std::size_t stride = 1;
    for (std::size_t idx = corr.size(); idx-- > 0;) {
        const std::size_t k = corr[idx];
        std::size_t states = 1;
        for (std::size_t kk : corr) states *= L[kk];
        std::vector<double> table(states * L[k], 0.0);
        for (std::size_t h = 0; h < states; ++h) table[h * L[k] + (h / stride) % L[k]] = 1.0;
        cpts[name(k)] = Cpt{name(k), {"h_corr"}, L[k], table};
        edges.emplace_back("h_corr", name(k));
        stride *= L[k];
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!correlated.count(k)) cpts[name(k)] = Cpt{name(k), {}, L[k], std::vector<double>(L[k], 1.0 / static_cast<double>(L[k]))};
    }
    const double flip = std::min(spec.noise_std, 1.0);
    if (noisy) {
        nodes.push_back("u_x");
        vars.push_back({"u_x", 2});
        cpts["u_x"] = Cpt{"u_x", {}, 2, {1.0 - flip, flip}};
        edges.emplace_back("u_x", "x");
    }
    nodes.push_back("x");
    vars.push_back({"x", x_states});

    std::vector<std::string> parents;
    for (std::size_t k = 0; k < n; ++k) parents.push_back(name(k));
    if (noisy) parents.push_back("u_x");
    std::size_t rows = 1;
    for (std::size_t l : L) rows *= l;
    const std::size_t noise_states = noisy ? 2 : 1;
    std::vector<double> table(rows * noise_states * x_states, 0.0);
    std::vector<std::size_t> digits(n);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t rest = r;
        for (std::size_t k = n; k-- > 0;) {
            digits[k] = rest % L[k];
            rest /= L[k];
        }
        std::size_t value = 0;
        switch (spec.discrete_render) {
            case DiscreteRender::Or:
                value = std::any_of(digits.begin(), digits.end(), [](std::size_t d) { return d > 0; }) ? 1 : 0;
                break;
            case DiscreteRender::Sum:
                for (std::size_t d : digits) value += d;
                break;
            case DiscreteRender::Index:
                value = r;
                break;
        }
        for (std::size_t u = 0; u < noise_states; ++u) {
            double* row = table.data() + (r * noise_states + u) * x_states;
            if (u == 0) {
                row[value] = 1.0;
            } else {
                for (std::size_t s = 0; s < x_states; ++s) row[s] = 1.0 / static_cast<double>(x_states);
            }
        }
    }
    cpts["x"] = Cpt{"x", parents, x_states, table};
    return DiscreteModel(build_dag(nodes, edges), vars, cpts);
}

Eigen::MatrixXd correlation_matrix(const Matrix& m) {
    const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered;
    const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
    Eigen::MatrixXd c(m.cols(), m.cols());
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            c(i, j) = (sd(i) > 0 && sd(j) > 0) ? cov(i, j) / (sd(i) * sd(j)) : (i == j ? 1.0 : 0.0);
        }
    }
    return c;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& d) {
    std::filesystem::create_directories(dir);
    write_matrix(dir / "x.bin", d.x);
    write_matrix(dir / "y.bin", d.y);
    write_matrix(dir / "u.bin", d.u);
    json meta;
    meta["spec"] = spec_json(d.spec);
    meta["seed"] = d.seed;
    meta["N"] = d.x.rows();
    meta["M"] = d.x.cols();
    meta["n"] = d.y.cols();
    meta["files"] = {{"x", "x.bin"}, {"y", "y.bin"}, {"u", "u.bin"}};
    meta["checksums"] = {{"x.bin", checksum(d.x)}, {"y.bin", checksum(d.y)}, {"u.bin", checksum(d.u)}};
    const Eigen::MatrixXd corr = correlation_matrix(d.y);
    json rows = json::array();
    for (Eigen::Index i = 0; i < corr.rows(); ++i) {
        std::vector<double> r(corr.cols());
        for (Eigen::Index j = 0; j < corr.cols(); ++j) r[static_cast<std::size_t>(j)] = corr(i, j);
        rows.push_back(r);
    }
    meta["factor_correlation"] = rows;
    std::ofstream os(dir / "dataset.json", std::ios::trunc);
    if (!os) throw FormatError("cannot write dataset.json in " + dir.string());
    os << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "dataset.json");
    if (!is) throw FormatError("no dataset.json in " + dir.string());
    json meta;
    try {
        meta = json::parse(is);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad dataset.json: ") + e.what());
    }
    Dataset d;
    try {
        d.spec = spec_from(meta.at("spec"));
        d.seed = meta.at("seed").get<std::uint64_t>();
        const auto N = meta.at("N").get<Eigen::Index>();
        const auto M = meta.at("M").get<Eigen::Index>();
        const auto n = meta.at("n").get<Eigen::Index>();
        d.x = read_matrix(dir / meta.at("files").at("x").get<std::string>(), N, M);
        d.y = read_matrix(dir / meta.at("files").at("y").get<std::string>(), N, n);
        d.u = read_matrix(dir / meta.at("files").at("u").get<std::string>(), N, M);
        const auto& sums = meta.at("checksums");
        if (sums.at("x.bin") != checksum(d.x) || sums.at("y.bin") != checksum(d.y) || sums.at("u.bin") != checksum(d.u)) {
            throw FormatError("dataset checksum mismatch in " + dir.string());
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad dataset.json: ") + e.what());
    }
    return d;
}

void save_csv(const std::filesystem::path& path, const Dataset& d) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot write " + path.string());
    std::vector<std::string> header;
    for (Eigen::Index k = 0; k < d.y.cols(); ++k) header.push_back("y" + std::to_string(k + 1));
    for (Eigen::Index k = 0; k < d.x.cols(); ++k) header.push_back("x" + std::to_string(k + 1));
    for (Eigen::Index k = 0; k < d.u.cols(); ++k) header.push_back("u" + std::to_string(k + 1));
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (Eigen::Index r = 0; r < d.x.rows(); ++r) {
        bool first = true;
        for (const Matrix* m : {&d.y, &d.x, &d.u}) {
            for (Eigen::Index c = 0; c < m->cols(); ++c) {
                os << (first ? "" : ",") << fmt((*m)(r, c));
                first = false;
            }
        }
        os << '\n';
    }
}

std::string fnv1a_hex(const void* data, std::size_t bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace rei::synth
