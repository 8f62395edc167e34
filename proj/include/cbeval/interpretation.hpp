#pragma once

#include "cbeval/concepts.hpp"
#include "cbeval/corpus.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cbeval {

struct ConceptInterpretation {
    enum class Method { CMAW, o1CA, None };
    Method method = Method::None;
    int concept_index = 0;
    std::vector<std::string> aligned_words;  // descending activation, at most top_k
    std::vector<std::string> opposed_words;  // ascending activation; only if negatives exist
    std::optional<std::string> label;        // o1CA
    double alignment_score = 0.0;            // o1CA
};

struct InterpretationOptions {
    int top_k = 5;
};

// Concept Maximally Activating Words: top words of the frequent-word pool by
// encoded activation on one concept dimension, plus the least activating
// words when negative activations exist. Ties break lexicographically.
ConceptInterpretation cmaw(const ConceptSpace& space, const ActivationBundle& bundle,
                           int concept_index, const InterpretationOptions& opt = {});

// Assigns the bank label whose representative sentences have the highest mean
// activation on the concept dimension. Ties go to the lowest entry index.
ConceptInterpretation align_label_bank(const ConceptSpace& space,
                                       const ConceptLabelBank& bank, int concept_index);

std::vector<ConceptInterpretation> interpret_all(
    const ConceptSpace& space, const ActivationBundle& bundle,
    const std::string& interpretation_method, const ConceptLabelBank* bank = nullptr,
    const InterpretationOptions& opt = {});

std::string interpretations_to_json(const std::vector<ConceptInterpretation>& interps);
std::vector<ConceptInterpretation> interpretations_from_json(const std::string& text);

}  // namespace cbeval
