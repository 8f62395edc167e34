#pragma once

#include "cbeval/corpus.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cbeval {

enum class ExtractionMethod { NoProjection, PCA, SVD, ICA, NMF, SAE };

std::string to_string(ExtractionMethod m);
ExtractionMethod extraction_method_from_string(const std::string& name);

struct FitMeta {
    std::uint64_t seed = 0;
    int iterations = 0;
    double final_objective = 0.0;
    bool converged = true;
    std::vector<double> objective_history;  // iterative methods only
};

struct FitOptions {
    // NMF
    double nmf_tolerance = 1e-6;      // relative objective decrease
    int nmf_max_iterations = 2000;
    double nmf_encode_tolerance = 1e-6;
    int nmf_encode_max_iterations = 500;
    // ICA (FastICA, logcosh contrast, symmetric decorrelation)
    double ica_tolerance = 1e-4;
    int ica_max_iterations = 200;
    // SAE
    int sae_steps = 10000;
    double sae_learning_rate = 1e-3;  // linearly decayed to 0
    double sae_l1_coefficient = 1e-3;
    int sae_batch_size = 32;
    int sae_resample_window = 1000;   // inputs a neuron must stay silent over
    int sae_resample_every = 2500;    // steps between resampling sweeps
};

// A fitted encoder/decoder pair. Linear methods store an affine map; SAE
// stores encoder weights/bias plus a unit-norm linear decoder. The decoder
// is affine for every method, which the attribution module relies on.
struct ConceptSpace {
    ExtractionMethod method = ExtractionMethod::NoProjection;
    long k = 0;
    long p = 0;

    Matrix encode_weights;   // p x k (linear methods) or p x k (SAE encoder)
    Vector encode_bias;      // k (SAE only, zero otherwise)
    Vector mean;             // p; data offset subtracted before encoding
    Matrix decode_weights;   // k x p
    Vector decode_bias;      // p; added after the linear decode
    Matrix fit_codes;        // codes of the training activations at fit time
    bool relu_codes = false; // SAE
    bool nonneg_codes = false;  // NMF and SAE enforce codes >= 0
    Matrix nmf_dictionary;   // k x p, NMF only (encode solves against it)
    FitMeta fit_meta;

    // Linear part of the decoder; the attribution gradient for every method.
    const Matrix& decoder_matrix() const { return decode_weights; }
};

ConceptSpace fit_concept_space(const ActivationBundle& bundle, ExtractionMethod method,
                               long k, std::uint64_t seed, const FitOptions& opt = {});

// n x p -> n x k. NMF solves a nonnegative least-squares problem against the
// fitted dictionary; everything else is a closed-form map.
Matrix encode(const ConceptSpace& space, const Matrix& acts,
              const FitOptions& opt = {});

// n x k -> n x p.
Matrix decode(const ConceptSpace& space, const Matrix& codes);

// Pre-softmax logits of the concept-bottleneck model: decode(codes) routed
// through the original linear head.
Matrix concept_logits(const ConceptSpace& space, const ActivationBundle& bundle,
                      const Matrix& codes);

void write_concept_space(const ConceptSpace& space, const std::filesystem::path& dir);
ConceptSpace read_concept_space(const std::filesystem::path& dir);

}  // namespace cbeval
