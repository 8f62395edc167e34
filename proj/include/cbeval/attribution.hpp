#pragma once

#include "cbeval/concepts.hpp"
#include "cbeval/corpus.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cbeval {

// Gradient x Input concept attributions plus their prompt-facing forms.
struct ImportanceReport {
    Matrix local;             // n x k
    Matrix global_per_class;  // |Y| x k
    Matrix local_norm;        // L1-normalized rows
    Matrix global_norm;
    std::vector<int> shown_concepts;      // globally important concept indices
    std::vector<int> bottleneck_predictions;  // argmax of f_c per sample
    int disagreement_count = 0;           // samples where f_c argmax != f prediction
    std::vector<int> empty_classes;       // classes with no bottleneck-predicted sample
};

struct AttributionOptions {
    double shown_threshold = 0.05;   // strict: |global_norm| > threshold
    double bucket_threshold = 0.05;  // closed at the boundary for encoding
};

// Row i is u_i elementwise-times the gradient of the pre-softmax logit of the
// bottleneck-predicted class with respect to u_i. Decoders are affine, so the
// gradient is decoder_matrix * head_weights[:, c] in closed form.
Matrix local_importance(const ConceptSpace& space, const ActivationBundle& bundle,
                        const Matrix& codes);

// Per-class mean of local rows, grouped by predicted class.
Matrix global_importance(const Matrix& local, const std::vector<int>& predictions,
                         int classes);

// Each row divided by its L1 norm; all-zero rows stay zero.
Matrix normalize_importance(const Matrix& rows);

// Maps a normalized importance in [-1, 1] to a sign token, or nothing when
// the value falls inside the not-shown band around zero.
// [-1,-0.3] -> "- -"; (-0.3,-0.05] -> "-"; [0.05,0.3) -> "+"; [0.3,1] -> "+ +".
std::optional<std::string> bucket_encode(double value,
                                         const AttributionOptions& opt = {});

ImportanceReport build_importance_report(const ConceptSpace& space,
                                         const ActivationBundle& bundle,
                                         const Matrix& codes,
                                         const AttributionOptions& opt = {});

std::string importance_report_to_json(const ImportanceReport& report);

}  // namespace cbeval
