#pragma once

// Command implementations behind the `rei` binary. Exit codes: 0 success or
// affirmative verdict, 1 negative verdict, 2 error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rei/metrics.hpp"
#include "rei/synth.hpp"
#include "rei/vae.hpp"

namespace rei::cli {

// Runs one command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Training settings read from a JSON config; every key is optional and
// unknown keys raise ConfigError. Dimensions come from the dataset.
struct TrainSettings {
    vae::ModelConfig model;
    vae::TrainConfig train;
};
TrainSettings train_settings_from_json(const nlohmann::json& j, vae::Mode mode, std::size_t obs_dim,
                                       std::size_t n_factors);
nlohmann::json train_settings_to_json(const TrainSettings& s);

vae::Model train_model(const synth::Dataset& data, const TrainSettings& s, std::uint64_t seed,
                       std::vector<vae::TraceRow>* trace = nullptr);

metrics::DciReport evaluate_model(const vae::Model& model, const synth::Dataset& data, std::size_t L,
                                  std::uint64_t seed);

struct BenchSetting {
    std::string name;
    synth::GenSpec spec;
};

struct BenchMethod {
    std::string name;
    vae::Mode mode = vae::Mode::Vae;
    nlohmann::json config = nlohmann::json::object();
};

struct BenchSuite {
    std::size_t n = 10000;
    std::size_t eval_samples = 100;
    std::vector<BenchSetting> settings;
    std::vector<BenchMethod> methods;
};

BenchSuite suite_from_json(const nlohmann::json& j);

// One suite cell: generate data at `seed`, train at `seed`, score at `seed`.
metrics::DciReport bench_cell(const BenchSuite& suite, const BenchSetting& setting, const BenchMethod& method,
                              std::uint64_t seed);

// "mean [sd]" with one decimal, sd over seeds with n - 1 in the denominator.
std::string mean_sd_cell(const std::vector<double>& values);

// git-style object id: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_hash(const std::string& content);

}  // namespace rei::cli
