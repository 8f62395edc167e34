#include "cbeval/interpretation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <stdexcept>

namespace cbeval {

using nlohmann::json;

ConceptInterpretation cmaw(const ConceptSpace& space, const ActivationBundle& bundle,
                           int concept_index, const InterpretationOptions& opt) {
    if (bundle.vocab_words.empty())
        throw std::runtime_error("CMAW requires a word pool");
    if (concept_index < 0 || concept_index >= space.k)
        throw std::invalid_argument("cmaw: concept index out of range");

    const Matrix codes = encode(space, bundle.vocab_activations);
    const Vector acts = codes.col(concept_index);

    std::vector<long> order(bundle.vocab_words.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<long>(i);
    std::sort(order.begin(), order.end(), [&](long a, long b) {
        if (acts(a) != acts(b)) return acts(a) > acts(b);
        return bundle.vocab_words[a] < bundle.vocab_words[b];
    });

    ConceptInterpretation interp;
    interp.method = ConceptInterpretation::Method::CMAW;
    interp.concept_index = concept_index;
    const int top = std::min<int>(opt.top_k, static_cast<int>(order.size()));
    for (int i = 0; i < top; ++i)
        interp.aligned_words.push_back(bundle.vocab_words[order[i]]);

    if (acts.minCoeff() < 0.0) {
        for (int i = 0; i < top; ++i) {
            const long idx = order[order.size() - 1 - i];
            interp.opposed_words.push_back(bundle.vocab_words[idx]);
        }
    }
    return interp;
}

ConceptInterpretation align_label_bank(const ConceptSpace& space,
                                       const ConceptLabelBank& bank, int concept_index) {
    if (bank.entries.empty())
        throw std::runtime_error("label bank alignment requires a nonempty bank");
    if (concept_index < 0 || concept_index >= space.k)
        throw std::invalid_argument("align_label_bank: concept index out of range");

    ConceptInterpretation interp;
    interp.method = ConceptInterpretation::Method::o1CA;
    interp.concept_index = concept_index;

    double best = 0.0;
    std::size_t best_idx = 0;
    for (std::size_t j = 0; j < bank.entries.size(); ++j) {
        const Matrix codes = encode(space, bank.entries[j].sentence_activations);
        const double mean = codes.col(concept_index).mean();
        if (j == 0 || mean > best) {
            best = mean;
            best_idx = j;
        }
    }
    interp.label = bank.entries[best_idx].label;
    interp.alignment_score = best;
    return interp;
}

std::vector<ConceptInterpretation> interpret_all(
    const ConceptSpace& space, const ActivationBundle& bundle,
    const std::string& interpretation_method, const ConceptLabelBank* bank,
    const InterpretationOptions& opt) {
    std::vector<ConceptInterpretation> out;
    out.reserve(static_cast<std::size_t>(space.k));
    for (int j = 0; j < space.k; ++j) {
        if (interpretation_method == "CMAW") {
            out.push_back(cmaw(space, bundle, j, opt));
        } else if (interpretation_method == "o1CA") {
            if (bank == nullptr)
                throw std::invalid_argument("o1CA interpretation needs a label bank");
            out.push_back(align_label_bank(space, *bank, j));
        } else {
            throw std::invalid_argument("unknown interpretation method: " +
                                        interpretation_method);
        }
    }
    return out;
}

std::string interpretations_to_json(const std::vector<ConceptInterpretation>& interps) {
    json arr = json::array();
    for (const auto& it : interps) {
        json e;
        e["concept"] = it.concept_index;
        e["method"] = it.method == ConceptInterpretation::Method::CMAW   ? "CMAW"
                      : it.method == ConceptInterpretation::Method::o1CA ? "o1CA"
                                                                         : "none";
        e["aligned"] = it.aligned_words;
        e["opposed"] = it.opposed_words;
        if (it.label) {
            e["label"] = *it.label;
            e["score"] = it.alignment_score;
        }
        arr.push_back(e);
    }
    return arr.dump(2);
}

std::vector<ConceptInterpretation> interpretations_from_json(const std::string& text) {
    const json arr = json::parse(text);
    std::vector<ConceptInterpretation> out;
    for (const auto& e : arr) {
        ConceptInterpretation it;
        it.concept_index = e.at("concept").get<int>();
        const std::string m = e.at("method").get<std::string>();
        it.method = m == "CMAW"   ? ConceptInterpretation::Method::CMAW
                    : m == "o1CA" ? ConceptInterpretation::Method::o1CA
                                  : ConceptInterpretation::Method::None;
        it.aligned_words = e.at("aligned").get<std::vector<std::string>>();
        it.opposed_words = e.at("opposed").get<std::vector<std::string>>();
        if (e.contains("label")) {
            it.label = e.at("label").get<std::string>();
            it.alignment_score = e.at("score").get<double>();
        }
        out.push_back(std::move(it));
    }
    return out;
}

}  // namespace cbeval
