#include "cbeval/attribution.hpp"
#include "cbeval/concepts.hpp"
#include "cbeval/corpus.hpp"
#include "cbeval/interpretation.hpp"
#include "cbeval/simulatability.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace cbeval;
namespace fs = std::filesystem;

namespace {

SyntheticBundle frozen_synth() {
    SyntheticOptions opt;
    opt.n = 60;
    opt.p = 12;
    opt.k_true = 4;
    opt.seed = 42;
    opt.nonneg = true;
    return generate_synthetic_bundle(opt);
}

struct Fixture {
    SyntheticBundle synth = frozen_synth();
    ConceptSpace space =
        fit_concept_space(synth.bundle, ExtractionMethod::NMF, 4, 0);
    Matrix codes = encode(space, synth.bundle.activations);
    ImportanceReport report = build_importance_report(space, synth.bundle, codes);
    std::vector<ConceptInterpretation> interps =
        interpret_all(space, synth.bundle, "CMAW");

    PromptBundle prompt(const std::string& type, int seed = 0) const {
        const SettingKey key{"synth", "toy", seed, "NMF", "CMAW", type, "mock", 4};
        const SampleSplit split = select_samples(synth.bundle, seed, {.per_phase = 10});
        PromptInputs inputs;
        inputs.report = &report;
        inputs.interpretations = &interps;
        return build_prompt(key, synth.bundle, split, inputs);
    }
};

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("sample selection is deterministic, disjoint and balanced over 100 seeds") {
    SyntheticOptions opt;
    opt.n = 300;
    opt.p = 12;
    opt.seed = 9;
    opt.mislabel_fraction = 0.5;
    const ActivationBundle bundle = generate_synthetic_bundle(opt).bundle;

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const SampleSplit a = select_samples(bundle, seed);
        const SampleSplit b = select_samples(bundle, seed);
        CHECK(a.lp_indices == b.lp_indices);
        CHECK(a.ep_indices == b.ep_indices);
        CHECK(a.lp_indices.size() == 20);
        CHECK(a.ep_indices.size() == 20);
        CHECK(a.feasible);

        std::set<long> all(a.lp_indices.begin(), a.lp_indices.end());
        all.insert(a.ep_indices.begin(), a.ep_indices.end());
        CHECK(all.size() == 40);  // phases are disjoint, no duplicates

        long correct = 0;
        for (long i : all)
            if (bundle.predictions[i] == bundle.labels[i]) ++correct;
        CHECK(correct == 20);  // half correctly classified, half misclassified
    }
    // different seeds give different splits
    CHECK(select_samples(bundle, 0).lp_indices != select_samples(bundle, 1).lp_indices);
}

TEST_CASE("selection falls back to correct samples when misclassified ones run out") {
    SyntheticOptions opt;
    opt.n = 120;
    opt.p = 12;
    opt.seed = 10;
    opt.mislabel_fraction = 0.0;  // nearly everything classified correctly
    const ActivationBundle bundle = generate_synthetic_bundle(opt).bundle;
    const SampleSplit split = select_samples(bundle, 0);
    CHECK(split.lp_indices.size() == 20);
    CHECK(split.ep_indices.size() == 20);
    CHECK(!split.feasible);
}

TEST_CASE("accuracy is exactly k/20 for every k") {
    const Fixture fx;
    const PromptBundle prompt = fx.prompt("E2");
    REQUIRE(prompt.answer_key.size() == 10);

    // per_phase=10 here, so run k of 10; the full 20-sample case is covered in
    // the acceptance suite
    for (std::size_t k = 0; k <= prompt.answer_key.size(); ++k) {
        std::ostringstream response;
        std::size_t index = 0;
        for (const auto& [tag, cls] : prompt.answer_key) {
            const int wrong = (cls + 1) % static_cast<int>(prompt.display_classes.size());
            response << tag << ": "
                     << prompt.display_classes[index < k ? cls : wrong] << "\n";
            ++index;
        }
        const SimulationResult r = score_response(prompt, response.str());
        CHECK(r.accuracy ==
              doctest::Approx(static_cast<double>(k) / prompt.answer_key.size()));
        CHECK(r.parse_failures == 0);
    }
}

TEST_CASE("parse failures count as wrong answers") {
    const Fixture fx;
    const PromptBundle prompt = fx.prompt("NE1");

    const SimulationResult empty = score_response(prompt, "no predictions here");
    CHECK(empty.accuracy == 0.0);
    CHECK(empty.parse_failures == static_cast<int>(prompt.answer_key.size()));

    // unknown class labels also fail to parse
    std::ostringstream garbled;
    for (const auto& [tag, _] : prompt.answer_key) garbled << tag << ": zebra\n";
    const SimulationResult r = score_response(prompt, garbled.str());
    CHECK(r.parse_failures == static_cast<int>(prompt.answer_key.size()));
}

TEST_CASE("scoring tolerates case, dashes and numeric class forms") {
    const Fixture fx;
    const PromptBundle prompt = fx.prompt("NE1");
    const auto first = prompt.answer_key.begin();
    const std::string digits = first->first.substr(std::string("Sample_").size());

    for (const std::string form :
         {"sample_" + digits + ": " + prompt.display_classes[first->second],
          "Sample " + digits + " - " + prompt.display_classes[first->second],
          "Sample_" + digits + ": class_" + std::to_string(first->second),
          "Sample_" + digits + ": " + std::to_string(first->second)}) {
        const SimulationResult r = score_response(prompt, form);
        CHECK(r.parsed.at(first->first) == first->second);
    }
}

TEST_CASE("oracle mock is perfect; random mock is near chance") {
    const Fixture fx;
    const PromptBundle prompt = fx.prompt("E2");

    const SimulationResult oracle =
        run_simulator(prompt, make_mock_simulator(prompt, MockMode::Oracle));
    CHECK(oracle.accuracy == 1.0);
    CHECK(oracle.parse_failures == 0);

    // binomial check: over many seeds, mean random accuracy within 3 sigma of 1/3
    const int trials = 400;
    const int per_prompt = static_cast<int>(prompt.answer_key.size());
    double total = 0.0;
    for (int seed = 0; seed < trials; ++seed)
        total += run_simulator(prompt, make_mock_simulator(prompt, MockMode::Random,
                                                           seed))
                     .accuracy;
    const double mean = total / trials;
    const double p = 1.0 / 3.0;
    const double sigma = std::sqrt(p * (1 - p) / (trials * per_prompt));
    CHECK(std::abs(mean - p) <= 3.0 * sigma);
}

TEST_CASE("lexical mock exploits explanations and falls back to random without them") {
    const Fixture fx;
    const PromptBundle with_expl = fx.prompt("E2");
    const SimulationResult lex =
        run_simulator(with_expl, make_mock_simulator(with_expl, MockMode::Lexical));
    CHECK(lex.accuracy >= 0.8);  // planted tokens make the mapping nearly perfect

    const PromptBundle without = fx.prompt("NE2");
    const std::string a = mock_simulator(without, MockMode::Lexical, 5);
    const std::string b = mock_simulator(without, MockMode::Random, 5);
    CHECK(a == b);  // same seeded fallback
}

TEST_CASE("prompt sections follow the type flags") {
    const Fixture fx;

    const PromptBundle ne1 = fx.prompt("NE1");
    CHECK(ne1.system_text.find("aligned:") == std::string::npos);
    CHECK(ne1.system_text.find("learning samples") == std::string::npos);
    CHECK(ne1.system_text.find("The classes are:") != std::string::npos);
    CHECK(ne1.user_text.find("Predict the class") == 0);

    const PromptBundle e1 = fx.prompt("E1");
    CHECK(e1.system_text.find("aligned:") != std::string::npos);
    CHECK(e1.system_text.find("learning samples") == std::string::npos);

    const PromptBundle ne2 = fx.prompt("NE2");
    CHECK(ne2.system_text.find("aligned:") == std::string::npos);
    CHECK(ne2.system_text.find("The learning samples are:") != std::string::npos);
    CHECK(ne2.system_text.find("The model predictions for the learning samples are:") !=
          std::string::npos);

    const PromptBundle e3 = fx.prompt("E3");
    CHECK(e3.system_text.find("Concepts contributions for Sample_0:") !=
          std::string::npos);

    // local maps only mention globally shown concepts
    const PromptBundle e2 = fx.prompt("E2");
    CHECK(e2.system_text.find("Concepts contributions") == std::string::npos);
}

TEST_CASE("anonymous variants hide the class names everywhere") {
    const Fixture fx;
    for (const std::string type : {"NE1-a", "E1-a", "NE2-a", "E2-a", "E3-a"}) {
        const PromptBundle prompt = fx.prompt(type);
        for (const auto& name : fx.synth.bundle.class_names) {
            CHECK(prompt.system_text.find(name) == std::string::npos);
            CHECK(prompt.user_text.find(name) == std::string::npos);
        }
        CHECK(prompt.display_classes[0] == "Class_0");
        // the oracle still scores perfectly against anonymized names
        const SimulationResult oracle =
            run_simulator(prompt, make_mock_simulator(prompt, MockMode::Oracle));
        CHECK(oracle.accuracy == 1.0);
    }
}

TEST_CASE("explanation prompt types require explanation inputs") {
    const Fixture fx;
    const SettingKey key{"synth", "toy", 0, "NMF", "CMAW", "E2", "mock", 4};
    const SampleSplit split = select_samples(fx.synth.bundle, 0, {.per_phase = 10});
    CHECK_THROWS_AS(build_prompt(key, fx.synth.bundle, split, PromptInputs{}),
                    std::invalid_argument);

    SettingKey bad = key;
    bad.prompt_type = "E9";
    PromptInputs inputs;
    inputs.report = &fx.report;
    inputs.interpretations = &fx.interps;
    CHECK_THROWS_AS(build_prompt(bad, fx.synth.bundle, split, inputs),
                    std::invalid_argument);
}

TEST_CASE("label non-leakage scan passes on real prompts and catches planted leaks") {
    const Fixture fx;
    for (const std::string type : {"NE1", "E1", "NE2", "E2", "E3", "E2-a"}) {
        const PromptBundle prompt = fx.prompt(type);
        CHECK(check_label_non_leakage(prompt));

        PromptBundle leaked = prompt;
        const auto& [tag, cls] = *leaked.answer_key.begin();
        leaked.system_text += "\n" + tag + ": " + leaked.display_classes[cls] + "\n";
        CHECK(!check_label_non_leakage(leaked));
    }
}

TEST_CASE("golden prompt files match byte for byte") {
    const char* source_dir = std::getenv("CBEVAL_SOURCE_DIR");
    const fs::path golden_dir =
        (source_dir ? fs::path(source_dir) : fs::path(CBEVAL_SOURCE_DIR)) / "tests" /
        "golden";
    const bool regenerate = std::getenv("CBEVAL_WRITE_GOLDEN") != nullptr;

    const Fixture fx;
    for (const std::string type :
         {"NE1", "E1", "NE2", "E2", "E3", "NE1-a", "E1-a", "NE2-a", "E2-a", "E3-a"}) {
        const PromptBundle prompt = fx.prompt(type, /*seed=*/0);
        const fs::path sys_file = golden_dir / (type + ".system.txt");
        const fs::path usr_file = golden_dir / (type + ".user.txt");
        if (regenerate) {
            fs::create_directories(golden_dir);
            std::ofstream(sys_file, std::ios::binary) << prompt.system_text;
            std::ofstream(usr_file, std::ios::binary) << prompt.user_text;
            continue;
        }
        REQUIRE(fs::exists(sys_file));
        CHECK(read_file(sys_file) == prompt.system_text);
        CHECK(read_file(usr_file) == prompt.user_text);
    }
}
