#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/sha.h>

#include "rei/dag.hpp"
#include "rei/errors.hpp"
#include "rei/oracle.hpp"

namespace rei::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr double kIdentifyTolerance = 1e-9;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

NodeSet parse_list(const std::string& s) {
    NodeSet out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.insert(item.substr(b, e - b + 1));
    }
    return out;
}

std::uint64_t resolve_seed(std::uint64_t flag) {
    const char* env = std::getenv("REI_SEED");
    if (env == nullptr || *env == '\0') return flag;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError(std::string("REI_SEED is not an unsigned integer: ") + env);
    return v;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json hash_input(const fs::path& p) {
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_regular_file() && e.path().filename() != "runs.jsonl") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        json j = json::object();
        for (const auto& f : files) j[f.filename().string()] = git_blob_hash(read_file(f));
        return j;
    }
    return git_blob_hash(read_file(p));
}

// One JSON line appended to <dir>/runs.jsonl per command invocation.
class Manifest {
public:
    explicit Manifest(std::string command) : started_(utc_now()), t0_(std::chrono::steady_clock::now()) {
        body_["command"] = std::move(command);
        body_["inputs"] = json::object();
        body_["outputs"] = json::array();
        body_["seeds"] = json::object();
        body_["config"] = json::object();
    }
    void input(const std::string& key, const fs::path& p) { body_["inputs"][key] = {{"path", p.string()}, {"hash", hash_input(p)}}; }
    void output(const fs::path& p) { body_["outputs"].push_back(p.string()); }
    json& config() { return body_["config"]; }
    json& seeds() { return body_["seeds"]; }
    void write(const fs::path& dir) {
        body_["started_utc"] = started_;
        body_["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        fs::create_directories(dir);
        std::ofstream out(dir / "runs.jsonl", std::ios::app);
        if (!out) throw FormatError("cannot append manifest in " + dir.string());
        out << body_.dump() << '\n';
    }

private:
    json body_;
    std::string started_;
    std::chrono::steady_clock::time_point t0_;
};

void check_keys(const json& j, const std::vector<std::string>& known, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ConfigError("unknown " + what + " key '" + k + "'");
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

// Commands ---------------------------------------------------------------

int cmd_dsep(const fs::path& dag_path, const std::string& xs, const std::string& ys, const std::string& zs,
             std::ostream& out) {
    const Dag g = load_dag(dag_path);
    const DSepVerdict v = d_separated(g, parse_list(xs), parse_list(ys), parse_list(zs));
    if (v.separated) {
        out << "separated\n";
        return 0;
    }
    out << "not separated\n";
    out << "witness: " << format_path(g, *v.witness_path) << '\n';
    return 1;
}

int cmd_identify(const fs::path& model_path, const std::string& cause, const std::string& effect,
                 const std::string& csv_path, std::ostream& out) {
    const DiscreteModel m = load_model(model_path);
    const ConditionalTable adj = adjust_collider(m, cause, effect);
    const ConditionalTable tru = truncated_effect(m, cause, effect);
    double worst = 0.0;
    std::ostringstream csv;
    csv << cause << "," << effect << ",adjustment,truncated,abs_diff\n";
    out << "p(" << effect << " | do(" << cause << "))\n";
    out << std::setw(8) << cause << std::setw(8) << effect << std::setw(22) << "adjustment" << std::setw(22)
        << "truncated" << std::setw(12) << "|diff|" << '\n';
    for (std::size_t c = 0; c < adj.cause_cardinality; ++c) {
        for (std::size_t e = 0; e < adj.effect_cardinality; ++e) {
            const double a = adj.at(c, e);
            const double t = tru.at(c, e);
            const double d = std::abs(a - t);
            worst = std::max(worst, d);
            char line[128];
            std::snprintf(line, sizeof line, "%8zu%8zu%22.17f%22.17f%12.3e\n", c, e, a, t, d);
            out << line;
            csv << c << ',' << e << ',' << fmt(a) << ',' << fmt(t) << ',' << fmt(d) << '\n';
        }
    }
    char line[64];
    std::snprintf(line, sizeof line, "max abs deviation: %.3e\n", worst);
    out << line;
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw FormatError("cannot write " + csv_path);
        f << csv.str();
    }
    return worst > kIdentifyTolerance ? 1 : 0;
}

int cmd_synth(const fs::path& spec_path, std::size_t n, std::uint64_t seed, const fs::path& out_dir, std::ostream& out) {
    Manifest manifest("synth");
    manifest.input("spec", spec_path);
    const synth::GenSpec spec = synth::load_spec(spec_path);
    const synth::Dataset d = synth::generate(spec, n, seed);
    synth::save_dataset(out_dir, d);
    const Eigen::MatrixXd corr = synth::correlation_matrix(d.y);
    out << "wrote " << n << " samples to " << out_dir.string() << '\n';
    for (Eigen::Index i = 0; i < corr.rows(); ++i)
        for (Eigen::Index j = i + 1; j < corr.cols(); ++j) {
            char line[64];
            std::snprintf(line, sizeof line, "corr(y%ld, y%ld) = %+.4f\n", static_cast<long>(i + 1),
                          static_cast<long>(j + 1), corr(i, j));
            out << line;
        }
    manifest.config() = {{"spec", json::parse(synth::spec_to_json(spec))}, {"n", n}};
    manifest.seeds() = {{"data", seed}};
    manifest.output(out_dir / "dataset.json");
    manifest.write(out_dir);
    return 0;
}

int cmd_train(const fs::path& data_dir, const std::string& mode_s, const std::string& config_path, std::uint64_t seed,
              const fs::path& out_dir, std::ostream& out) {
    Manifest manifest("train");
    manifest.input("data", data_dir);
    const vae::Mode mode = vae::parse_mode(mode_s);
    json cfg = json::object();
    if (!config_path.empty()) {
        manifest.input("config", config_path);
        cfg = read_json(config_path);
    }
    const synth::Dataset data = synth::load_dataset(data_dir);
    const TrainSettings s = train_settings_from_json(cfg, mode, static_cast<std::size_t>(data.x.cols()),
                                                     static_cast<std::size_t>(data.y.cols()));
    std::vector<vae::TraceRow> trace;
    const vae::Model model = train_model(data, s, seed, &trace);
    vae::save_bundle(out_dir, model, trace, seed, s.train);
    for (const auto& r : trace) {
        char line[128];
        std::snprintf(line, sizeof line, "epoch %zu  reconstruction %.6f  regularizer %.6f  total %.6f\n", r.epoch,
                      r.reconstruction, r.regularizer, r.total);
        out << line;
    }
    manifest.config() = train_settings_to_json(s);
    manifest.seeds() = {{"model", seed}, {"data", data.seed}};
    for (const char* f : {"model.ckpt", "loss_trace.csv", "bundle.json"}) manifest.output(out_dir / f);
    manifest.write(out_dir);
    return 0;
}

int cmd_eval(const fs::path& ckpt_dir, const fs::path& data_dir, const fs::path& out_file, std::size_t L,
             std::uint64_t seed, std::ostream& out) {
    Manifest manifest("eval");
    manifest.input("checkpoint", ckpt_dir);
    manifest.input("data", data_dir);
    const vae::Model model = vae::load_bundle(ckpt_dir);
    const synth::Dataset data = synth::load_dataset(data_dir);
    const metrics::DciReport rep = evaluate_model(model, data, L, seed);
    fs::path base = out_file;
    base.replace_extension();
    const fs::path json_path = fs::path(base).concat(".json");
    const fs::path csv_path = fs::path(base).concat(".csv");
    if (!out_file.parent_path().empty()) fs::create_directories(out_file.parent_path());
    const metrics::ImportanceConfig icfg;
    metrics::write_report_json(json_path, rep, icfg, {seed, data.seed, seed});
    metrics::write_report_csv(csv_path, rep);
    char line[128];
    std::snprintf(line, sizeof line, "D %.2f  C %.2f  I %.2f\n", rep.D_percent(), 100.0 * rep.C_aggregate,
                  100.0 * rep.I_aggregate);
    out << line;
    manifest.config() = {{"L", L}, {"method", icfg.method}, {"alpha", icfg.alpha}};
    manifest.seeds() = {{"model", seed}, {"data", data.seed}, {"split", seed}};
    manifest.output(json_path);
    manifest.output(csv_path);
    manifest.write(out_file.parent_path().empty() ? fs::path(".") : out_file.parent_path());
    return 0;
}

std::string svg_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            default: o += c;
        }
    }
    return o;
}

// Grouped bar chart: one group per setting, one bar per method, sd whiskers.
void write_svg(const fs::path& path, const BenchSuite& suite, const std::vector<std::vector<std::vector<double>>>& d) {
    static const char* colors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
    const double width = 720, height = 360, left = 50, bottom = 300, top = 30;
    const double group_w = (width - left - 20) / static_cast<double>(suite.settings.size());
    const double bar_w = group_w * 0.8 / static_cast<double>(suite.methods.size());
    auto y_of = [&](double v) { return bottom - (bottom - top) * std::clamp(v, 0.0, 100.0) / 100.0; };
    std::ofstream o(path);
    if (!o) throw FormatError("cannot write " + path.string());
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << width - 10 << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 100; t += 20) {
        o << "<text x=\"" << left - 8 << "\" y=\"" << y_of(t) + 4 << "\" text-anchor=\"end\">" << t << "</text>\n";
        o << "<line x1=\"" << left << "\" y1=\"" << y_of(t) << "\" x2=\"" << width - 10 << "\" y2=\"" << y_of(t)
          << "\" stroke=\"#ddd\"/>\n";
    }
    for (std::size_t s = 0; s < suite.settings.size(); ++s) {
        const double gx = left + group_w * static_cast<double>(s) + group_w * 0.1;
        for (std::size_t m = 0; m < suite.methods.size(); ++m) {
            const auto& v = d[m][s];
            if (v.empty()) continue;
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
            const double x = gx + bar_w * static_cast<double>(m);
            o << "<rect x=\"" << x << "\" y=\"" << y_of(mean) << "\" width=\"" << bar_w * 0.9 << "\" height=\""
              << bottom - y_of(mean) << "\" fill=\"" << colors[m % 6] << "\"/>\n";
            const double cx = x + bar_w * 0.45;
            o << "<line x1=\"" << cx << "\" y1=\"" << y_of(mean - sd) << "\" x2=\"" << cx << "\" y2=\""
              << y_of(mean + sd) << "\" stroke=\"black\"/>\n";
        }
        o << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << bottom + 18 << "\" text-anchor=\"middle\">"
          << svg_escape(suite.settings[s].name) << "</text>\n";
    }
    for (std::size_t m = 0; m < suite.methods.size(); ++m) {
        const double ly = bottom + 36 + 14 * static_cast<double>(m);
        o << "<rect x=\"" << left << "\" y=\"" << ly - 10 << "\" width=\"10\" height=\"10\" fill=\"" << colors[m % 6]
          << "\"/>\n";
        o << "<text x=\"" << left + 16 << "\" y=\"" << ly << "\">" << svg_escape(suite.methods[m].name) << "</text>\n";
    }
    o << "<text x=\"" << left << "\" y=\"16\">DCI disentanglement (mean, sd whiskers)</text>\n";
    o << "</svg>\n";
}

int cmd_bench(const fs::path& suite_path, std::size_t seeds, std::uint64_t base_seed, const fs::path& out_dir,
              bool plot, std::ostream& out, std::ostream& err) {
    Manifest manifest("bench");
    manifest.input("suite", suite_path);
    const BenchSuite suite = suite_from_json(read_json(suite_path));
    if (seeds == 0) throw ConfigError("--seeds must be at least 1");
    fs::create_directories(out_dir);

    // scores[method][setting] holds the D values of the seeds that succeeded.
    std::vector<std::vector<std::vector<double>>> scores(
        suite.methods.size(), std::vector<std::vector<double>>(suite.settings.size()));
    std::ofstream cells(out_dir / "cells.csv");
    if (!cells) throw FormatError("cannot write cells.csv in " + out_dir.string());
    cells << "method,setting,seed,status,D,C,I,error\n";
    std::size_t failures = 0;
    for (std::size_t m = 0; m < suite.methods.size(); ++m) {
        for (std::size_t s = 0; s < suite.settings.size(); ++s) {
            for (std::size_t k = 0; k < seeds; ++k) {
                const std::uint64_t seed = base_seed + k;
                const auto& method = suite.methods[m];
                const auto& setting = suite.settings[s];
                cells << method.name << ',' << setting.name << ',' << seed << ',';
                try {
                    const auto rep = bench_cell(suite, setting, method, seed);
                    scores[m][s].push_back(rep.D_percent());
                    cells << "ok," << fmt(rep.D_percent()) << ',' << fmt(100.0 * rep.C_aggregate) << ','
                          << fmt(100.0 * rep.I_aggregate) << ",\n";
                    char line[160];
                    std::snprintf(line, sizeof line, "%s / %s / seed %llu: D = %.2f\n", method.name.c_str(),
                                  setting.name.c_str(), static_cast<unsigned long long>(seed), rep.D_percent());
                    out << line;
                } catch (const std::exception& e) {
                    ++failures;
                    std::string msg = e.what();
                    std::replace(msg.begin(), msg.end(), ',', ';');
                    std::replace(msg.begin(), msg.end(), '\n', ' ');
                    cells << "failed,,,," << msg << '\n';
                    err << method.name << " / " << setting.name << " / seed " << seed << " failed: " << e.what() << '\n';
                }
                cells.flush();
            }
        }
    }

    std::ofstream table(out_dir / "table.csv");
    if (!table) throw FormatError("cannot write table.csv in " + out_dir.string());
    table << "method";
    for (const auto& s : suite.settings) table << ',' << s.name;
    table << '\n';
    for (std::size_t m = 0; m < suite.methods.size(); ++m) {
        table << suite.methods[m].name;
        for (std::size_t s = 0; s < suite.settings.size(); ++s) table << ',' << mean_sd_cell(scores[m][s]);
        table << '\n';
    }
    table.close();
    out << read_file(out_dir / "table.csv");
    if (plot) {
        write_svg(out_dir / "bench.svg", suite, scores);
        manifest.output(out_dir / "bench.svg");
    }
    manifest.config() = read_json(suite_path);
    manifest.seeds() = {{"base", base_seed}, {"count", seeds}};
    manifest.output(out_dir / "cells.csv");
    manifest.output(out_dir / "table.csv");
    manifest.write(out_dir);
    if (failures > 0) err << failures << " cell(s) failed; see cells.csv\n";
    return 0;
}

}  // namespace

std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    SHA_CTX ctx;
    SHA1_Init(&ctx);
    SHA1_Update(&ctx, header.data(), header.size());
    SHA1_Update(&ctx, content.data(), content.size());
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1_Final(digest, &ctx);
    std::ostringstream ss;
    for (unsigned char b : digest) ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(b);
    return ss.str();
}

std::string mean_sd_cell(const std::vector<double>& v) {
    if (v.empty()) return "failed";
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f [%.1f]", mean, sd);
    return buf;
}

TrainSettings train_settings_from_json(const json& j, vae::Mode mode, std::size_t obs_dim, std::size_t n_factors) {
    check_keys(j,
               {"latent_dim", "hidden", "lambda", "mc_samples", "z_draws", "decoder_uses_yc", "epochs", "batch_size",
                "lr", "beta1", "beta2", "eps"},
               "train config");
    TrainSettings s;
    try {
        s.model.mode = mode;
        s.model.obs_dim = obs_dim;
        s.model.n_factors = n_factors;
        take(j, "latent_dim", s.model.latent_dim);
        take(j, "hidden", s.model.hidden);
        take(j, "lambda", s.model.lambda);
        take(j, "mc_samples", s.model.mc_samples);
        take(j, "z_draws", s.model.z_draws);
        take(j, "decoder_uses_yc", s.model.decoder_uses_yc);
        take(j, "epochs", s.train.epochs);
        take(j, "batch_size", s.train.batch_size);
        take(j, "lr", s.train.adam.lr);
        take(j, "beta1", s.train.adam.beta1);
        take(j, "beta2", s.train.adam.beta2);
        take(j, "eps", s.train.adam.eps);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad train config value: ") + e.what());
    }
    if (s.model.mc_samples == 0 || s.model.z_draws == 0) throw ConfigError("mc_samples and z_draws must be positive");
    if (!(s.train.adam.lr > 0.0)) throw ConfigError("lr must be positive");
    return s;
}

json train_settings_to_json(const TrainSettings& s) {
    return {{"mode", vae::mode_name(s.model.mode)},
            {"latent_dim", s.model.latent()},
            {"hidden", s.model.hidden},
            {"lambda", s.model.lambda},
            {"mc_samples", s.model.mc_samples},
            {"z_draws", s.model.z_draws},
            {"decoder_uses_yc", s.model.decoder_uses_yc},
            {"epochs", s.train.epochs},
            {"batch_size", s.train.batch_size},
            {"lr", s.train.adam.lr},
            {"beta1", s.train.adam.beta1},
            {"beta2", s.train.adam.beta2},
            {"eps", s.train.adam.eps}};
}

vae::Model train_model(const synth::Dataset& data, const TrainSettings& s, std::uint64_t seed,
                       std::vector<vae::TraceRow>* trace) {
    std::seed_seq seq{seed, kInitStream};
    std::mt19937_64 rng(seq);
    vae::Model model = vae::Model::create(s.model, rng);
    const vae::TrainData td{data.x, data.y, s.model.mode == vae::Mode::ReiNoise ? &data.u : nullptr};
    auto rows = vae::train(model, td, s.train, seed);
    if (trace != nullptr) *trace = std::move(rows);
    return model;
}

metrics::DciReport evaluate_model(const vae::Model& model, const synth::Dataset& data, std::size_t L,
                                  std::uint64_t seed) {
    if (static_cast<std::size_t>(data.x.cols()) != model.config.obs_dim)
        throw ShapeMismatch("dataset has " + std::to_string(data.x.cols()) + " observed columns; model expects " +
                            std::to_string(model.config.obs_dim));
    if (static_cast<std::size_t>(data.y.cols()) != model.config.n_factors)
        throw ShapeMismatch("dataset has " + std::to_string(data.y.cols()) + " factors; model expects " +
                            std::to_string(model.config.n_factors));
    const metrics::Matrix z = vae::representation(model, data.x, data.y, L, seed);
    return metrics::evaluate(z, data.y, {}, seed);
}

BenchSuite suite_from_json(const json& j) {
    check_keys(j, {"n", "eval_samples", "settings", "methods"}, "suite");
    BenchSuite suite;
    try {
        take(j, "n", suite.n);
        take(j, "eval_samples", suite.eval_samples);
        if (j.contains("settings")) {
            for (const auto& s : j.at("settings")) {
                check_keys(s, {"name", "spec"}, "suite setting");
                suite.settings.push_back({s.at("name").get<std::string>(), synth::spec_from_json(s.at("spec").dump())});
            }
        }
        if (j.contains("methods")) {
            for (const auto& m : j.at("methods")) {
                check_keys(m, {"name", "mode", "config"}, "suite method");
                BenchMethod bm;
                bm.name = m.at("name").get<std::string>();
                bm.mode = vae::parse_mode(m.at("mode").get<std::string>());
                if (m.contains("config")) bm.config = m.at("config");
                train_settings_from_json(bm.config, bm.mode, 1, 1);
                suite.methods.push_back(std::move(bm));
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad suite: ") + e.what());
    }
    if (suite.settings.empty() || suite.methods.empty()) throw ConfigError("suite has no settings or no methods");
    return suite;
}

metrics::DciReport bench_cell(const BenchSuite& suite, const BenchSetting& setting, const BenchMethod& method,
                              std::uint64_t seed) {
    const synth::Dataset data = synth::generate(setting.spec, suite.n, seed);
    const TrainSettings s = train_settings_from_json(method.config, method.mode, setting.spec.obs_dim,
                                                     setting.spec.n_factors);
    const vae::Model model = train_model(data, s, seed);
    return evaluate_model(model, data, suite.eval_samples, seed);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Causal identification on collider DAGs and identification-regularized VAEs", "rei"};
    app.require_subcommand(1);

    std::string dag, xs, ys, zs;
    auto* dsep = app.add_subcommand("dsep", "d-separation query; exit 0 separated, 1 not separated");
    dsep->add_option("--dag", dag, "DAG JSON file")->required();
    dsep->add_option("--x", xs, "comma-separated node list")->required();
    dsep->add_option("--y", ys, "comma-separated node list")->required();
    dsep->add_option("--z", zs, "comma-separated conditioning set");

    std::string model_path, cause, effect, csv;
    auto* identify = app.add_subcommand("identify", "collider adjustment vs truncated factorization");
    identify->add_option("--model", model_path, "discrete model JSON file")->required();
    identify->add_option("--cause", cause)->required();
    identify->add_option("--effect", effect)->required();
    identify->add_option("--csv", csv, "also write the table as CSV");

    std::string spec_path, out_dir;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--spec", spec_path, "generator spec JSON")->required();
    synth_cmd->add_option("--n", n, "number of samples")->required();
    synth_cmd->add_option("--seed", seed);
    synth_cmd->add_option("--out", out_dir, "output directory")->required();

    std::string data_dir, mode, config_path;
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--mode", mode, "vae | rei | rei-noise")->required();
    train->add_option("--config", config_path, "train config JSON");
    train->add_option("--seed", seed);
    train->add_option("--out", out_dir, "bundle directory")->required();

    std::string ckpt, out_file;
    std::size_t L = 100;
    auto* eval = app.add_subcommand("eval", "score a trained model with DCI");
    eval->add_option("--checkpoint", ckpt, "bundle directory")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--out", out_file, "report path; .json and .csv are written")->required();
    eval->add_option("--samples", L, "posterior draws averaged per example");
    eval->add_option("--seed", seed);

    std::string suite_path;
    std::size_t seeds = 5;
    bool plot = false;
    auto* bench = app.add_subcommand("bench", "run a method x setting comparison suite");
    bench->add_option("--suite", suite_path, "suite JSON")->required();
    bench->add_option("--seeds", seeds, "seeds per cell");
    bench->add_option("--seed", seed, "first seed");
    bench->add_option("--out", out_dir, "output directory")->required();
    bench->add_flag("--plot", plot, "write bench.svg");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*dsep) return cmd_dsep(dag, xs, ys, zs, out);
        if (*identify) return cmd_identify(model_path, cause, effect, csv, out);
        seed = resolve_seed(seed);
        if (*synth_cmd) return cmd_synth(spec_path, n, seed, out_dir, out);
        if (*train) return cmd_train(data_dir, mode, config_path, seed, out_dir, out);
        if (*eval) return cmd_eval(ckpt, data_dir, out_file, L, seed, out);
        if (*bench) return cmd_bench(suite_path, seeds, seed, out_dir, plot, out, err);
    } catch (const rei::Error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}

}  // namespace rei::cli
