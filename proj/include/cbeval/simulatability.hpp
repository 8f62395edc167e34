#pragma once

#include "cbeval/attribution.hpp"
#include "cbeval/corpus.hpp"
#include "cbeval/interpretation.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace cbeval {

// The 40 evaluation samples of one setting: 20 for the learning phase, 20 for
// the evaluation phase, balanced between correctly and incorrectly classified
// samples and across classes where feasible.
struct SampleSplit {
    std::vector<long> lp_indices;
    std::vector<long> ep_indices;
    std::uint64_t seed = 0;
    bool feasible = true;  // false when the bundle could not satisfy the quotas
};

struct SelectOptions {
    int per_phase = 20;  // samples per phase
};

SampleSplit select_samples(const ActivationBundle& bundle, std::uint64_t seed,
                           const SelectOptions& opt = {});

// The assembled prompt for one setting, plus the hidden answer key.
struct PromptBundle {
    std::string system_text;  // IP + LP sections
    std::string user_text;    // EP section
    std::map<std::string, int> answer_key;  // sample tag -> class index
    std::vector<std::string> display_classes;  // names or Class_{j}
    SettingKey setting;
};

struct PromptInputs {
    const ImportanceReport* report = nullptr;
    const std::vector<ConceptInterpretation>* interpretations = nullptr;
    double local_threshold = 0.05;  // |local norm| filter for E3 blocks
};

// Renders the five prompt types (NE1, E1, NE2, E2, E3) and their anonymous
// variants (suffix "-a"). Explanation inputs are required exactly when the
// prompt type uses them.
PromptBundle build_prompt(const SettingKey& setting, const ActivationBundle& bundle,
                          const SampleSplit& split, const PromptInputs& inputs);

// Scans a prompt for leaked evaluation-phase answers ("Sample_{i}: {class}"
// pairs from the answer key). Returns true when the prompt is clean.
bool check_label_non_leakage(const PromptBundle& prompt);

struct SimulationResult {
    std::map<std::string, int> parsed;  // sample tag -> class index, -1 on parse failure
    std::string raw_response;
    double accuracy = 0.0;
    int parse_failures = 0;
};

// A simulator turns (system, user) text into a response. Implementations:
// HTTP chat-completion endpoint or the offline mocks.
using SimulatorFn = std::function<std::string(const std::string& system_text,
                                              const std::string& user_text)>;

SimulationResult run_simulator(const PromptBundle& prompt, const SimulatorFn& simulator);

// Scores a raw response against the answer key (the core of run_simulator,
// exposed for tests).
SimulationResult score_response(const PromptBundle& prompt, const std::string& response);

enum class MockMode { Oracle, Lexical, Random };

// Offline stand-ins for user-LLMs. Oracle replays the answer key. Lexical
// reads the explanation sections back out of the prompt and predicts by
// bucket-weighted word overlap. Random answers uniformly under the seed.
std::string mock_simulator(const PromptBundle& prompt, MockMode mode,
                           std::uint64_t seed = 0);

SimulatorFn make_mock_simulator(const PromptBundle& prompt, MockMode mode,
                                std::uint64_t seed = 0);

struct HttpSimulatorConfig {
    std::string base_url;   // e.g. https://api.example.com
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env = "CBEVAL_API_KEY";
    int max_retries = 3;
    int initial_backoff_ms = 500;
    double temperature = 0.0;
    int timeout_seconds = 120;
};

// Chat-completion client with exponential backoff on transient failures.
SimulatorFn make_http_simulator(const HttpSimulatorConfig& config);

}  // namespace cbeval
