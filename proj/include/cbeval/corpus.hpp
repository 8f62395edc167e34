#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cbeval {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Everything the pipeline consumes for one dataset-model pair: raw texts,
// penultimate-layer activations A = h(X), the linear head of g, model
// predictions, ground-truth labels (sample selection only) and a pool of
// frequent-word embeddings for word-level concept interpretation.
struct ActivationBundle {
    std::vector<std::string> samples;
    Matrix activations;        // n x p
    std::vector<int> predictions;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    Matrix head_weights;       // p x |Y|
    Vector head_bias;          // |Y|
    std::vector<std::string> vocab_words;
    Matrix vocab_activations;  // m x p
    bool nonneg_flag = false;
    std::string provenance;    // free-form note on where the word pool came from

    long n() const { return activations.rows(); }
    long p() const { return activations.cols(); }
    long num_classes() const { return static_cast<long>(class_names.size()); }

    // Logits of the original model head: A * W + b.
    Matrix logits() const;
    // Throws std::runtime_error naming the first violated invariant.
    void validate() const;
};

// Pre-generated candidate concept labels, each with representative sentences
// already embedded into the model's latent space.
struct ConceptLabelBank {
    struct Entry {
        std::string label;
        std::vector<std::string> sentences;
        Matrix sentence_activations;  // |sentences| x p
    };
    std::vector<Entry> entries;

    void validate(long p) const;
};

// Identifies one experimental setting; settings are comparable iff all
// fields except the compared one agree.
struct SettingKey {
    std::string dataset_id;
    std::string model_id;
    int seed = 0;
    std::string extraction_method;
    std::string interpretation_method;
    std::string prompt_type;  // e.g. "E2" or "E2-a" for anonymous classes
    std::string simulator_id;
    int k = 0;

    std::string to_string() const;
    auto operator<=>(const SettingKey&) const = default;
};

// Directory exchange format: manifest.json + one .f32 file per matrix
// (little-endian float32, row-major) + one .txt file per string list.
void write_bundle(const ActivationBundle& bundle, const std::filesystem::path& dir);
ActivationBundle read_bundle(const std::filesystem::path& dir);

void write_label_bank(const ConceptLabelBank& bank, const std::filesystem::path& dir);
ConceptLabelBank read_label_bank(const std::filesystem::path& dir);

// Low-level matrix persistence shared with concept-space serialization.
void write_matrix_f32(const Matrix& m, const std::filesystem::path& file);
Matrix read_matrix_f32(const std::filesystem::path& file, long rows, long cols);
std::uint32_t crc32_file(const std::filesystem::path& file);
std::uint32_t crc32_string(const std::string& data);

struct SyntheticOptions {
    long n = 200;
    long p = 16;
    int classes = 3;
    int k_true = 4;
    std::uint64_t seed = 0;
    bool nonneg = true;
    double noise_level = 0.02;        // stddev of additive noise
    double mislabel_fraction = 0.5;   // fraction of samples generated to be misclassified
    // When > 0, off-class concepts co-activate proportionally to the sample's
    // own-class intensity. This plants a shared covariance direction that mixes
    // classes inside variance-driven bases while leaving the parts structure
    // recoverable.
    double cross_activation = 0.0;
};

// Desk-scale stand-in for real model exports. Plants k_true sparse concept
// directions, draws activations as sparse combinations of them, derives a
// consistent linear head, and names sample tokens after the active concepts
// so that recovered concepts are checkable against ground truth.
struct SyntheticBundle {
    ActivationBundle bundle;
    Matrix planted_directions;                       // k_true x p
    std::vector<std::vector<std::string>> concept_tokens;  // per planted concept
    double noise_norm;                               // Frobenius norm of injected noise
};

SyntheticBundle generate_synthetic_bundle(const SyntheticOptions& opt);

}  // namespace cbeval
