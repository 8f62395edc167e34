#include "cbeval/concepts.hpp"
#include "cbeval/corpus.hpp"
#include "cbeval/interpretation.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace cbeval;

namespace {

SyntheticBundle make_synth(std::uint64_t seed) {
    SyntheticOptions opt;
    opt.n = 150;
    opt.p = 16;
    opt.k_true = 4;
    opt.seed = seed;
    opt.nonneg = true;
    return generate_synthetic_bundle(opt);
}

}  // namespace

TEST_CASE("CMAW recovers the planted tokens of NMF concepts") {
    const SyntheticBundle synth = make_synth(3);
    const ConceptSpace s =
        fit_concept_space(synth.bundle, ExtractionMethod::NMF, 4, 0);

    // every recovered concept's top words should come from a single planted
    // concept's token triple
    int clean = 0;
    for (int c = 0; c < 4; ++c) {
        const ConceptInterpretation interp = cmaw(s, synth.bundle, c);
        REQUIRE(!interp.aligned_words.empty());
        const std::string& top = interp.aligned_words.front();
        for (const auto& toks : synth.concept_tokens) {
            if (std::find(toks.begin(), toks.end(), top) == toks.end()) continue;
            // the remaining tokens of the same planted concept follow directly,
            // because their vocab embeddings differ only by scale
            const std::set<std::string> top5(interp.aligned_words.begin(),
                                             interp.aligned_words.end());
            if (top5 == std::set<std::string>(toks.begin(), toks.end())) ++clean;
        }
    }
    CHECK(clean == 4);
}

TEST_CASE("CMAW matches a brute-force ranking of the word pool") {
    const SyntheticBundle synth = make_synth(5);
    const ConceptSpace s = fit_concept_space(synth.bundle, ExtractionMethod::PCA, 5, 0);
    const Matrix word_codes = encode(s, synth.bundle.vocab_activations);

    for (int c = 0; c < 5; ++c) {
        const ConceptInterpretation interp = cmaw(s, synth.bundle, c);
        // brute force: sort (activation desc, word asc)
        std::vector<std::pair<double, std::string>> scored;
        for (long w = 0; w < word_codes.rows(); ++w)
            scored.push_back({word_codes(w, c), synth.bundle.vocab_words[w]});
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        REQUIRE(interp.aligned_words.size() == 5);
        for (int i = 0; i < 5; ++i) CHECK(interp.aligned_words[i] == scored[i].second);

        const bool has_negative = word_codes.col(c).minCoeff() < 0.0;
        CHECK(interp.opposed_words.empty() == !has_negative);
        if (has_negative) {
            // opposed words are the least activating, ascending
            CHECK(interp.opposed_words.front() == scored.back().second);
        }
    }
}

TEST_CASE("CMAW requires a word pool") {
    SyntheticBundle synth = make_synth(7);
    synth.bundle.vocab_words.clear();
    synth.bundle.vocab_activations = Matrix(0, synth.bundle.p());
    const ConceptSpace s = fit_concept_space(synth.bundle, ExtractionMethod::PCA, 3, 0);
    CHECK_THROWS_WITH_AS(cmaw(s, synth.bundle, 0), doctest::Contains("word pool"),
                         std::runtime_error);
}

TEST_CASE("label bank alignment matches a brute-force oracle") {
    const SyntheticBundle synth = make_synth(11);
    const ConceptSpace s = fit_concept_space(synth.bundle, ExtractionMethod::NMF, 4, 0);

    // bank entries: one sentence cloud per planted direction plus a decoy
    ConceptLabelBank bank;
    for (int j = 0; j < 4; ++j) {
        ConceptLabelBank::Entry e;
        e.label = "planted_" + std::to_string(j);
        e.sentences = {"a", "b", "c"};
        e.sentence_activations = Matrix(3, synth.bundle.p());
        for (int r = 0; r < 3; ++r)
            e.sentence_activations.row(r) =
                synth.planted_directions.row(j) * (1.0 + 0.2 * r);
        bank.entries.push_back(e);
    }
    ConceptLabelBank::Entry decoy;
    decoy.label = "decoy";
    decoy.sentences = {"z"};
    decoy.sentence_activations = Matrix::Zero(1, synth.bundle.p());
    bank.entries.push_back(decoy);

    for (int c = 0; c < 4; ++c) {
        const ConceptInterpretation interp = align_label_bank(s, bank, c);
        REQUIRE(interp.label.has_value());

        // oracle: mean encoded activation per entry, argmax with lowest index
        double best = -1e300;
        std::size_t best_idx = 0;
        for (std::size_t e = 0; e < bank.entries.size(); ++e) {
            const Matrix codes = encode(s, bank.entries[e].sentence_activations);
            const double mean = codes.col(c).mean();
            if (mean > best) {
                best = mean;
                best_idx = e;
            }
        }
        CHECK(*interp.label == bank.entries[best_idx].label);
        CHECK(interp.alignment_score == doctest::Approx(best));
    }
}

TEST_CASE("label bank ties resolve to the lowest entry index") {
    const SyntheticBundle synth = make_synth(13);
    const ConceptSpace s =
        fit_concept_space(synth.bundle, ExtractionMethod::NoProjection, 1, 0);

    ConceptLabelBank bank;
    for (const char* name : {"first", "duplicate"}) {
        ConceptLabelBank::Entry e;
        e.label = name;
        e.sentences = {"same"};
        e.sentence_activations = Matrix::Constant(1, synth.bundle.p(), 0.5);
        bank.entries.push_back(e);
    }
    const ConceptInterpretation interp = align_label_bank(s, bank, 0);
    CHECK(*interp.label == "first");
}

TEST_CASE("interpret_all dispatches and serializes") {
    const SyntheticBundle synth = make_synth(17);
    const ConceptSpace s = fit_concept_space(synth.bundle, ExtractionMethod::NMF, 4, 0);

    const auto via_cmaw = interpret_all(s, synth.bundle, "CMAW");
    REQUIRE(via_cmaw.size() == 4);
    CHECK(via_cmaw[2].concept_index == 2);
    CHECK(via_cmaw[0].method == ConceptInterpretation::Method::CMAW);

    CHECK_THROWS_AS(interpret_all(s, synth.bundle, "o1CA"), std::invalid_argument);

    const std::string json_text = interpretations_to_json(via_cmaw);
    const auto round = interpretations_from_json(json_text);
    REQUIRE(round.size() == via_cmaw.size());
    for (std::size_t i = 0; i < round.size(); ++i) {
        CHECK(round[i].aligned_words == via_cmaw[i].aligned_words);
        CHECK(round[i].opposed_words == via_cmaw[i].opposed_words);
        CHECK(round[i].concept_index == via_cmaw[i].concept_index);
        CHECK(round[i].method == via_cmaw[i].method);
    }
}
