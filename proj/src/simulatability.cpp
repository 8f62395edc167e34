#include "cbeval/simulatability.hpp"

#include "cbeval/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace cbeval {

using nlohmann::json;

// ---------------------------------------------------------------------------
// sample selection

SampleSplit select_samples(const ActivationBundle& bundle, std::uint64_t seed,
                           const SelectOptions& opt) {
    const long n = bundle.n();
    if (n < 2) throw std::invalid_argument("select_samples: need at least 2 samples");
    const int classes = static_cast<int>(bundle.num_classes());
    const long target_total = 2L * opt.per_phase;
    const long target_correct = opt.per_phase;

    Rng rng(seed);

    // bucket indices by (correctness, true class), shuffled per bucket
    std::vector<std::vector<long>> correct(classes), incorrect(classes);
    for (long i = 0; i < n; ++i) {
        if (bundle.predictions[i] == bundle.labels[i])
            correct[bundle.labels[i]].push_back(i);
        else
            incorrect[bundle.labels[i]].push_back(i);
    }
    for (auto& v : correct) rng.shuffle(v);
    for (auto& v : incorrect) rng.shuffle(v);

    // round-robin over classes keeps coverage as uniform as the data allows
    auto take_round_robin = [&](std::vector<std::vector<long>>& buckets, long want) {
        std::vector<long> taken;
        bool any = true;
        while (static_cast<long>(taken.size()) < want && any) {
            any = false;
            for (int c = 0; c < classes && static_cast<long>(taken.size()) < want; ++c) {
                if (!buckets[c].empty()) {
                    taken.push_back(buckets[c].back());
                    buckets[c].pop_back();
                    any = true;
                }
            }
        }
        return taken;
    };

    std::vector<long> chosen = take_round_robin(correct, target_correct);
    const long correct_taken = static_cast<long>(chosen.size());
    auto wrong = take_round_robin(incorrect, target_total - correct_taken);
    chosen.insert(chosen.end(), wrong.begin(), wrong.end());

    SampleSplit split;
    split.seed = seed;
    split.feasible = correct_taken == target_correct &&
                     static_cast<long>(chosen.size()) == target_total;
    if (static_cast<long>(chosen.size()) < target_total) {
        // fall back to remaining correct samples so both phases stay filled
        auto extra = take_round_robin(correct, target_total - static_cast<long>(chosen.size()));
        chosen.insert(chosen.end(), extra.begin(), extra.end());
    }

    rng.shuffle(chosen);
    const long half = static_cast<long>(chosen.size()) / 2;
    split.lp_indices.assign(chosen.begin(), chosen.begin() + half);
    split.ep_indices.assign(chosen.begin() + half, chosen.end());
    return split;
}

// ---------------------------------------------------------------------------
// prompt assembly

namespace {

struct PromptTypeFlags {
    bool global_expl = false;
    bool learning_phase = false;
    bool local_expl = false;
    bool anonymous = false;
};

PromptTypeFlags parse_prompt_type(const std::string& type) {
    std::string base = type;
    PromptTypeFlags f;
    if (base.size() > 2 && base.substr(base.size() - 2) == "-a") {
        f.anonymous = true;
        base = base.substr(0, base.size() - 2);
    }
    if (base == "NE1") {
    } else if (base == "E1") {
        f.global_expl = true;
    } else if (base == "NE2") {
        f.learning_phase = true;
    } else if (base == "E2") {
        f.global_expl = true;
        f.learning_phase = true;
    } else if (base == "E3") {
        f.global_expl = true;
        f.learning_phase = true;
        f.local_expl = true;
    } else {
        throw std::invalid_argument("unknown prompt type: " + type);
    }
    return f;
}

std::string quote_list(const std::vector<std::string>& words) {
    std::string out = "[";
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ", ";
        out += "'" + words[i] + "'";
    }
    out += "]";
    return out;
}

// {'concept_1': '+', 'concept_9': '+ +'} over the given concept/token pairs
std::string concept_map(const std::vector<std::pair<int, std::string>>& entries) {
    std::string out = "{";
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i) out += ", ";
        out += "'concept_" + std::to_string(entries[i].first + 1) + "': '" +
               entries[i].second + "'";
    }
    out += "}";
    return out;
}

}  // namespace

PromptBundle build_prompt(const SettingKey& setting, const ActivationBundle& bundle,
                          const SampleSplit& split, const PromptInputs& inputs) {
    const PromptTypeFlags flags = parse_prompt_type(setting.prompt_type);
    if (flags.global_expl &&
        (inputs.report == nullptr || inputs.interpretations == nullptr))
        throw std::invalid_argument("prompt type " + setting.prompt_type +
                                    " requires global explanations");

    PromptBundle out;
    out.setting = setting;
    const int classes = static_cast<int>(bundle.num_classes());
    for (int c = 0; c < classes; ++c) {
        out.display_classes.push_back(flags.anonymous ? "Class_" + std::to_string(c)
                                                      : bundle.class_names[c]);
    }

    std::ostringstream sys;

    // 1.1 task description
    sys << "You are a classifier. For each sample, you have to predict the class.";
    if (flags.global_expl)
        sys << " To complete the task, you will be given the concepts and their"
               " importance for each class.";
    if (flags.learning_phase)
        sys << " You will have examples of samples and the model's predictions as"
               " references for the task.";
    sys << " Each sample class prediction should be in the format:"
           " 'Sample_{i}: {predicted_class}'.\n\n";
    sys << "The classes are: [";
    for (int c = 0; c < classes; ++c) {
        if (c) sys << ", ";
        sys << out.display_classes[c];
    }
    sys << "]\n";

    // 1.2 global explanations
    if (flags.global_expl) {
        const ImportanceReport& rep = *inputs.report;
        const auto& interps = *inputs.interpretations;

        sys << "\nFor each concept, the most aligned and opposed words are:\n";
        for (int j : rep.shown_concepts) {
            const auto& it = interps.at(static_cast<std::size_t>(j));
            sys << "concept_" << (j + 1) << ":";
            if (it.method == ConceptInterpretation::Method::o1CA && it.label) {
                sys << " label: '" << *it.label << "'";
            } else {
                sys << " aligned: " << quote_list(it.aligned_words);
                if (!it.opposed_words.empty())
                    sys << " opposed: " << quote_list(it.opposed_words);
            }
            sys << "\n";
        }

        sys << "\nThe most important concepts and their importance for each class are:\n";
        for (int c = 0; c < classes; ++c) {
            std::vector<std::pair<int, std::string>> entries;
            for (int j : rep.shown_concepts) {
                if (auto tok = bucket_encode(rep.global_norm(c, j)))
                    entries.emplace_back(j, *tok);
            }
            sys << out.display_classes[c] << ": " << concept_map(entries) << "\n";
        }
    }

    // 2.x learning phase
    if (flags.learning_phase) {
        sys << "\nThe learning samples are:\n";
        for (std::size_t i = 0; i < split.lp_indices.size(); ++i)
            sys << "Sample_" << i << ": " << bundle.samples[split.lp_indices[i]] << "\n";

        if (flags.local_expl) {
            const ImportanceReport& rep = *inputs.report;
            sys << "\n";
            for (std::size_t i = 0; i < split.lp_indices.size(); ++i) {
                std::vector<std::pair<int, std::string>> entries;
                for (int j : rep.shown_concepts) {
                    const double v = rep.local_norm(split.lp_indices[i], j);
                    if (std::abs(v) <= inputs.local_threshold) continue;
                    if (auto tok = bucket_encode(v)) entries.emplace_back(j, *tok);
                }
                sys << "Concepts contributions for Sample_" << i << ": "
                    << concept_map(entries) << "\n";
            }
        }

        sys << "\nThe model predictions for the learning samples are:\n";
        for (std::size_t i = 0; i < split.lp_indices.size(); ++i) {
            sys << "Sample_" << i << ": "
                << out.display_classes[bundle.predictions[split.lp_indices[i]]] << "\n";
        }
    }

    // 3.1 evaluation phase
    std::ostringstream usr;
    usr << "Predict the class for each of the following samples:\n";
    const std::size_t ep_offset = split.lp_indices.size();
    for (std::size_t i = 0; i < split.ep_indices.size(); ++i) {
        const std::string tag = "Sample_" + std::to_string(ep_offset + i);
        usr << tag << ": " << bundle.samples[split.ep_indices[i]] << "\n";
        out.answer_key[tag] = bundle.predictions[split.ep_indices[i]];
    }

    out.system_text = sys.str();
    out.user_text = usr.str();
    return out;
}

bool check_label_non_leakage(const PromptBundle& prompt) {
    for (const auto& [tag, cls] : prompt.answer_key) {
        const std::string leak = tag + ": " + prompt.display_classes.at(cls);
        if (prompt.system_text.find(leak) != std::string::npos) return false;
        if (prompt.user_text.find(leak) != std::string::npos) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// response scoring

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n'\".");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n'\".");
    return s.substr(first, last - first + 1);
}

int resolve_class(const std::string& raw, const std::vector<std::string>& classes) {
    const std::string value = lowercase(trim(raw));
    if (value.empty()) return -1;
    for (std::size_t c = 0; c < classes.size(); ++c)
        if (lowercase(classes[c]) == value) return static_cast<int>(c);
    // accept "class_3" / "class 3" / bare index
    static const std::regex idx_re(R"(^class[_ ]?(\d+)$|^(\d+)$)", std::regex::icase);
    std::smatch m;
    if (std::regex_match(value, m, idx_re)) {
        const int idx = std::stoi(m[1].matched ? m[1].str() : m[2].str());
        if (idx >= 0 && idx < static_cast<int>(classes.size())) return idx;
    }
    return -1;
}

}  // namespace

SimulationResult score_response(const PromptBundle& prompt, const std::string& response) {
    SimulationResult result;
    result.raw_response = response;

    static const std::regex line_re(R"(^\s*sample[_ ]?(\d+)\s*[:\-]\s*(.+?)\s*$)",
                                    std::regex::icase);
    std::map<std::string, int> answers;
    std::istringstream is(response);
    std::string line;
    while (std::getline(is, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, line_re)) continue;
        const std::string tag = "Sample_" + m[1].str();
        if (!prompt.answer_key.count(tag)) continue;
        answers[tag] = resolve_class(m[2].str(), prompt.display_classes);
    }

    long correct = 0;
    for (const auto& [tag, expected] : prompt.answer_key) {
        const auto it = answers.find(tag);
        const int got = it == answers.end() ? -1 : it->second;
        result.parsed[tag] = got;
        if (got == -1) ++result.parse_failures;
        if (got == expected) ++correct;
    }
    result.accuracy = prompt.answer_key.empty()
                          ? 0.0
                          : static_cast<double>(correct) /
                                static_cast<double>(prompt.answer_key.size());
    return result;
}

SimulationResult run_simulator(const PromptBundle& prompt, const SimulatorFn& simulator) {
    return score_response(prompt, simulator(prompt.system_text, prompt.user_text));
}

// ---------------------------------------------------------------------------
// mocks

namespace {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

double bucket_weight(const std::string& token) {
    if (token == "- -") return -2.0;
    if (token == "-") return -1.0;
    if (token == "+") return 1.0;
    if (token == "+ +") return 2.0;
    return 0.0;
}

struct ParsedExplanations {
    std::map<int, std::vector<std::string>> aligned_words;  // concept -> words
    std::vector<std::pair<std::string, std::vector<std::pair<int, double>>>>
        class_weights;  // class display name -> (concept, weight)
    bool found = false;
};

ParsedExplanations parse_explanations(const std::string& system_text) {
    ParsedExplanations out;
    static const std::regex aligned_re(R"(^concept_(\d+): aligned: \[([^\]]*)\])");
    static const std::regex word_re(R"('([^']*)')");
    static const std::regex pair_re(R"('concept_(\d+)': '([^']*)')");

    std::istringstream is(system_text);
    std::string line;
    bool in_class_map = false;
    while (std::getline(is, line)) {
        std::smatch m;
        if (std::regex_search(line, m, aligned_re)) {
            std::vector<std::string> words;
            std::string list = m[2].str();
            for (auto it = std::sregex_iterator(list.begin(), list.end(), word_re);
                 it != std::sregex_iterator(); ++it)
                words.push_back(lowercase((*it)[1].str()));
            out.aligned_words[std::stoi(m[1].str()) - 1] = std::move(words);
            out.found = true;
            continue;
        }
        if (line == "The most important concepts and their importance for each class are:") {
            in_class_map = true;
            continue;
        }
        if (in_class_map) {
            const auto colon = line.find(": {");
            if (colon == std::string::npos) {
                if (!line.empty()) in_class_map = false;
                continue;
            }
            std::vector<std::pair<int, double>> weights;
            const std::string body = line.substr(colon + 2);
            for (auto it = std::sregex_iterator(body.begin(), body.end(), pair_re);
                 it != std::sregex_iterator(); ++it)
                weights.emplace_back(std::stoi((*it)[1].str()) - 1,
                                     bucket_weight((*it)[2].str()));
            out.class_weights.emplace_back(line.substr(0, colon), std::move(weights));
            out.found = true;
        }
    }
    return out;
}

std::map<std::string, std::string> parse_ep_samples(const std::string& user_text) {
    std::map<std::string, std::string> out;
    static const std::regex sample_re(R"(^(Sample_\d+): (.*)$)");
    std::istringstream is(user_text);
    std::string line;
    while (std::getline(is, line)) {
        std::smatch m;
        if (std::regex_match(line, m, sample_re)) out[m[1].str()] = m[2].str();
    }
    return out;
}

std::string random_answers(const PromptBundle& prompt, std::uint64_t seed) {
    Rng rng(seed);
    std::ostringstream os;
    for (const auto& [tag, _] : prompt.answer_key) {
        const auto c = rng.uniform_int(prompt.display_classes.size());
        os << tag << ": " << prompt.display_classes[c] << "\n";
    }
    return os.str();
}

}  // namespace

std::string mock_simulator(const PromptBundle& prompt, MockMode mode, std::uint64_t seed) {
    switch (mode) {
        case MockMode::Oracle: {
            std::ostringstream os;
            for (const auto& [tag, cls] : prompt.answer_key)
                os << tag << ": " << prompt.display_classes.at(cls) << "\n";
            return os.str();
        }
        case MockMode::Random:
            return random_answers(prompt, seed);
        case MockMode::Lexical: {
            const ParsedExplanations expl = parse_explanations(prompt.system_text);
            if (!expl.found || expl.class_weights.empty())
                return random_answers(prompt, seed);  // no global explanations to use

            std::ostringstream os;
            for (const auto& [tag, text] : parse_ep_samples(prompt.user_text)) {
                const auto tokens = tokenize(text);
                double best = 0.0;
                std::size_t best_class = 0;
                for (std::size_t c = 0; c < expl.class_weights.size(); ++c) {
                    double score = 0.0;
                    for (const auto& [concept_id, weight] : expl.class_weights[c].second) {
                        const auto wit = expl.aligned_words.find(concept_id);
                        if (wit == expl.aligned_words.end()) continue;
                        long overlap = 0;
                        for (const auto& tok : tokens)
                            if (std::find(wit->second.begin(), wit->second.end(), tok) !=
                                wit->second.end())
                                ++overlap;
                        score += weight * static_cast<double>(overlap);
                    }
                    if (c == 0 || score > best) {
                        best = score;
                        best_class = c;
                    }
                }
                os << tag << ": " << expl.class_weights[best_class].first << "\n";
            }
            return os.str();
        }
    }
    return {};
}

SimulatorFn make_mock_simulator(const PromptBundle& prompt, MockMode mode,
                                std::uint64_t seed) {
    return [prompt, mode, seed](const std::string&, const std::string&) {
        return mock_simulator(prompt, mode, seed);
    };
}

}  // namespace cbeval
