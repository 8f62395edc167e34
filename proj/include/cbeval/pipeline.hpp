#pragma once

#include "cbeval/analysis.hpp"
#include "cbeval/concepts.hpp"
#include "cbeval/corpus.hpp"
#include "cbeval/simulatability.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cbeval {

struct BundleRef {
    std::string dataset_id;
    std::string model_id;
    std::filesystem::path path;
};

struct SimulatorSpec {
    std::string id = "oracle-mock";
    std::string kind = "mock";  // "mock" or "http"
    std::string mode = "oracle";  // mock: oracle | lexical | random
    std::uint64_t seed = 0;
    HttpSimulatorConfig http;
};

// Declarative experiment description; loaded from a JSON config file.
struct ExperimentConfig {
    std::vector<BundleRef> bundles;
    std::vector<std::string> extraction_methods;
    std::vector<std::string> interpretation_methods = {"CMAW"};
    std::vector<std::string> prompt_types;
    std::vector<long> k_values;
    std::vector<int> eval_seeds = {0, 1, 2, 3, 4};
    std::vector<int> validation_seeds = {100, 101};
    std::uint64_t fit_seed = 0;
    SimulatorSpec simulator;
    std::optional<std::filesystem::path> label_bank;
    std::filesystem::path output_dir;
    int parallelism = 4;
    FitOptions fit_options;
    AttributionOptions attribution_options;
    // prompt types the rank stage aggregates over when comparing extraction or
    // interpretation methods; empty = all
    std::vector<std::string> rank_prompt_types;

    void validate() const;
    std::string config_hash() const;
};

ExperimentConfig load_config(const std::filesystem::path& file);

std::vector<SettingKey> enumerate_settings(const ExperimentConfig& config,
                                           bool validation);

struct StageOptions {
    bool dry_run = false;
    int parallelism_override = 0;
};

// Pipeline stages; each one is resumable and writes outputs keyed by
// SettingKey under the configured output directory.
void cmd_extract(const ExperimentConfig& config, const StageOptions& opt = {});
void cmd_interpret(const ExperimentConfig& config, const StageOptions& opt = {});
void cmd_prompt(const ExperimentConfig& config, const StageOptions& opt = {});
void cmd_simulate(const ExperimentConfig& config, const StageOptions& opt = {});
void cmd_metrics(const ExperimentConfig& config, const StageOptions& opt = {});
void cmd_rank(const ExperimentConfig& config, const StageOptions& opt = {});
void cmd_report(const ExperimentConfig& config, const StageOptions& opt = {});

// Loads the per-setting accuracies written by cmd_simulate.
std::map<SettingKey, double> load_results(const ExperimentConfig& config,
                                          bool validation);

// Appendix-style k validation: mean accuracy on validation seeds per
// (dataset, method, k); best k per (dataset, method), ties to the smaller k.
std::map<std::pair<std::string, std::string>, long> select_best_k(
    const ExperimentConfig& config, const std::map<SettingKey, double>& validation);

}  // namespace cbeval
