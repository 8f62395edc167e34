#pragma once

#include "cbeval/attribution.hpp"
#include "cbeval/concepts.hpp"
#include "cbeval/corpus.hpp"

#include <optional>
#include <string>

namespace cbeval {

// The auxiliary faithfulness/complexity metrics correlated against
// simulatability rank.
struct MetricVector {
    // complexity
    double nb_concepts = 0.0;
    double nb_activated = 0.0;   // L0: mean count of nonzero code entries
    double ratio_activated = 0.0;
    double cosine_similarity = 0.0;
    double covariance = 0.0;
    double nb_important = 0.0;
    double ratio_important = 0.0;
    // faithfulness
    double latents_l2 = 0.0;
    double logits_l2 = 0.0;
    double logits_kl = 0.0;
    std::optional<double> completeness;  // undefined when acc(f) equals chance
};

struct MetricOptions {
    double nonzero_threshold = 1e-12;
    double important_threshold = 0.05;
};

MetricVector complexity_metrics(const ConceptSpace& space, const Matrix& codes,
                                const ImportanceReport& report,
                                const MetricOptions& opt = {});

MetricVector faithfulness_metrics(const ConceptSpace& space,
                                  const ActivationBundle& bundle, const Matrix& codes);

MetricVector all_metrics(const ConceptSpace& space, const ActivationBundle& bundle,
                         const Matrix& codes, const ImportanceReport& report,
                         const MetricOptions& opt = {});

std::string metrics_csv_header();
std::string metrics_to_csv_row(const SettingKey& key, const MetricVector& m);

}  // namespace cbeval
