#include "cbeval/pipeline.hpp"

#include "cbeval/interpretation.hpp"
#include "cbeval/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace cbeval {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// config

void ExperimentConfig::validate() const {
    if (bundles.empty()) throw std::invalid_argument("config: no bundles listed");
    if (extraction_methods.empty())
        throw std::invalid_argument("config: no extraction methods");
    if (prompt_types.empty()) throw std::invalid_argument("config: no prompt types");
    if (k_values.empty()) throw std::invalid_argument("config: no k values");
    if (output_dir.empty()) throw std::invalid_argument("config: output_dir missing");
    for (const auto& b : bundles) {
        if (!fs::exists(b.path / "manifest.json"))
            throw std::invalid_argument("config: bundle path not found: " +
                                        b.path.string());
    }
    for (int s : eval_seeds)
        for (int v : validation_seeds)
            if (s == v)
                throw std::invalid_argument(
                    "config: evaluation and validation seeds must be disjoint");
    if (label_bank && !fs::exists(*label_bank / "manifest.json"))
        throw std::invalid_argument("config: label bank not found: " +
                                    label_bank->string());
}

std::string ExperimentConfig::config_hash() const {
    std::ostringstream os;
    for (const auto& b : bundles) os << b.dataset_id << b.model_id << b.path.string();
    for (const auto& m : extraction_methods) os << m;
    for (const auto& m : interpretation_methods) os << m;
    for (const auto& t : prompt_types) os << t;
    for (long k : k_values) os << k;
    for (int s : eval_seeds) os << s;
    for (int s : validation_seeds) os << s;
    os << fit_seed << simulator.id << simulator.kind << simulator.mode << simulator.seed;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", crc32_string(os.str()));
    return buf;
}

ExperimentConfig load_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config: " + file.string());
    const json j = json::parse(in);

    ExperimentConfig cfg;
    for (const auto& b : j.at("bundles")) {
        cfg.bundles.push_back({b.at("dataset").get<std::string>(),
                               b.at("model").get<std::string>(),
                               fs::path(b.at("path").get<std::string>())});
    }
    cfg.extraction_methods = j.at("extraction_methods").get<std::vector<std::string>>();
    if (j.contains("interpretation_methods"))
        cfg.interpretation_methods =
            j.at("interpretation_methods").get<std::vector<std::string>>();
    cfg.prompt_types = j.at("prompt_types").get<std::vector<std::string>>();
    cfg.k_values = j.at("k_values").get<std::vector<long>>();
    if (j.contains("eval_seeds")) cfg.eval_seeds = j.at("eval_seeds").get<std::vector<int>>();
    if (j.contains("validation_seeds"))
        cfg.validation_seeds = j.at("validation_seeds").get<std::vector<int>>();
    if (j.contains("fit_seed")) cfg.fit_seed = j.at("fit_seed").get<std::uint64_t>();
    cfg.output_dir = fs::path(j.at("output_dir").get<std::string>());
    if (j.contains("parallelism")) cfg.parallelism = j.at("parallelism").get<int>();
    if (j.contains("label_bank"))
        cfg.label_bank = fs::path(j.at("label_bank").get<std::string>());
    if (j.contains("rank_prompt_types"))
        cfg.rank_prompt_types = j.at("rank_prompt_types").get<std::vector<std::string>>();
    if (j.contains("simulator")) {
        const auto& s = j.at("simulator");
        cfg.simulator.id = s.value("id", cfg.simulator.id);
        cfg.simulator.kind = s.value("kind", cfg.simulator.kind);
        cfg.simulator.mode = s.value("mode", cfg.simulator.mode);
        cfg.simulator.seed = s.value("seed", cfg.simulator.seed);
        if (cfg.simulator.kind == "http") {
            cfg.simulator.http.base_url = s.at("base_url").get<std::string>();
            cfg.simulator.http.model = s.value("model", "");
            cfg.simulator.http.path = s.value("path", cfg.simulator.http.path);
            cfg.simulator.http.api_key_env =
                s.value("api_key_env", cfg.simulator.http.api_key_env);
            cfg.simulator.http.max_retries =
                s.value("max_retries", cfg.simulator.http.max_retries);
        }
    }
    if (j.contains("sae_steps")) cfg.fit_options.sae_steps = j.at("sae_steps").get<int>();
    if (j.contains("nmf_max_iterations"))
        cfg.fit_options.nmf_max_iterations = j.at("nmf_max_iterations").get<int>();
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// setting enumeration and paths

std::vector<SettingKey> enumerate_settings(const ExperimentConfig& config,
                                           bool validation) {
    const auto& seeds = validation ? config.validation_seeds : config.eval_seeds;
    std::vector<SettingKey> out;
    for (const auto& b : config.bundles)
        for (const auto& method : config.extraction_methods)
            for (long k : config.k_values)
                for (const auto& interp : config.interpretation_methods)
                    for (const auto& prompt : config.prompt_types)
                        for (int seed : seeds)
                            out.push_back({b.dataset_id, b.model_id, seed, method, interp,
                                           prompt, config.simulator.id,
                                           static_cast<int>(k)});
    return out;
}

namespace {

std::string space_id(const std::string& dataset, const std::string& model,
                     const std::string& method, long k) {
    return dataset + "__" + model + "__" + method + "__k" + std::to_string(k);
}

fs::path space_dir(const ExperimentConfig& cfg, const std::string& id) {
    return cfg.output_dir / "spaces" / id;
}

fs::path prompt_dir(const ExperimentConfig& cfg, const SettingKey& key) {
    return cfg.output_dir / "prompts" / key.to_string();
}

fs::path result_file(const ExperimentConfig& cfg, const SettingKey& key) {
    return cfg.output_dir / "results" / (key.to_string() + ".json");
}

// Shared per-run cache of loaded bundles, spaces and derived reports.
struct PipelineContext {
    const ExperimentConfig& cfg;
    std::map<std::string, ActivationBundle> bundles;        // dataset__model
    std::map<std::string, ConceptSpace> spaces;             // space id
    std::map<std::string, Matrix> codes;                    // space id
    std::map<std::string, ImportanceReport> reports;        // space id
    std::map<std::string, std::vector<ConceptInterpretation>> interps;  // id__method
    std::optional<ConceptLabelBank> bank;

    explicit PipelineContext(const ExperimentConfig& c) : cfg(c) {
        if (c.label_bank) bank = read_label_bank(*c.label_bank);
    }

    const ActivationBundle& bundle(const BundleRef& ref) {
        const std::string id = ref.dataset_id + "__" + ref.model_id;
        auto it = bundles.find(id);
        if (it == bundles.end())
            it = bundles.emplace(id, read_bundle(ref.path)).first;
        return it->second;
    }

    const BundleRef& bundle_ref(const std::string& dataset, const std::string& model) {
        for (const auto& b : cfg.bundles)
            if (b.dataset_id == dataset && b.model_id == model) return b;
        throw std::runtime_error("no bundle for " + dataset + "/" + model);
    }

    const ConceptSpace& space(const std::string& dataset, const std::string& model,
                              const std::string& method, long k) {
        const std::string id = space_id(dataset, model, method, k);
        auto it = spaces.find(id);
        if (it == spaces.end()) {
            const fs::path dir = space_dir(cfg, id);
            if (!fs::exists(dir / "manifest.json"))
                throw std::runtime_error("missing concept space for stage: " + id +
                                         " (run the extract stage first)");
            it = spaces.emplace(id, read_concept_space(dir)).first;
        }
        return it->second;
    }

    const Matrix& space_codes(const std::string& dataset, const std::string& model,
                              const std::string& method, long k) {
        const std::string id = space_id(dataset, model, method, k);
        auto it = codes.find(id);
        if (it == codes.end()) {
            const auto& b = bundle(bundle_ref(dataset, model));
            it = codes.emplace(id, encode(space(dataset, model, method, k), b.activations,
                                          cfg.fit_options))
                     .first;
        }
        return it->second;
    }

    const ImportanceReport& report(const std::string& dataset, const std::string& model,
                                   const std::string& method, long k) {
        const std::string id = space_id(dataset, model, method, k);
        auto it = reports.find(id);
        if (it == reports.end()) {
            const auto& b = bundle(bundle_ref(dataset, model));
            it = reports
                     .emplace(id, build_importance_report(
                                      space(dataset, model, method, k), b,
                                      space_codes(dataset, model, method, k),
                                      cfg.attribution_options))
                     .first;
        }
        return it->second;
    }

    const std::vector<ConceptInterpretation>& interpretation(
        const std::string& dataset, const std::string& model, const std::string& method,
        long k, const std::string& interp_method) {
        const std::string id = space_id(dataset, model, method, k) + "__" + interp_method;
        auto it = interps.find(id);
        if (it == interps.end()) {
            const fs::path file = cfg.output_dir / "interpretations" / (id + ".json");
            if (!fs::exists(file))
                throw std::runtime_error("missing interpretation for stage: " + id +
                                         " (run the interpret stage first)");
            std::ifstream in(file);
            std::ostringstream os;
            os << in.rdbuf();
            it = interps.emplace(id, interpretations_from_json(os.str())).first;
        }
        return it->second;
    }
};

void write_text(const fs::path& file, const std::string& text) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << text;
}

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// unique (dataset, model, method, k) combinations of a config
std::vector<std::tuple<std::string, std::string, std::string, long>> space_tuples(
    const ExperimentConfig& cfg) {
    std::vector<std::tuple<std::string, std::string, std::string, long>> out;
    for (const auto& b : cfg.bundles)
        for (const auto& m : cfg.extraction_methods)
            for (long k : cfg.k_values)
                out.emplace_back(b.dataset_id, b.model_id, m, k);
    return out;
}

void run_parallel(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex error_mutex;
    std::exception_ptr error;
    const int n = std::min<std::size_t>(workers, count);
    for (int w = 0; w < n; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

// ---------------------------------------------------------------------------
// stages

void cmd_extract(const ExperimentConfig& config, const StageOptions& opt) {
    PipelineContext ctx(config);
    for (const auto& [dataset, model, method, k] : space_tuples(config)) {
        const std::string id = space_id(dataset, model, method, k);
        const fs::path dir = space_dir(config, id);
        if (opt.dry_run) {
            std::cout << "extract " << id << "\n";
            continue;
        }
        if (fs::exists(dir / "manifest.json")) continue;  // resumable
        const auto& bundle = ctx.bundle(ctx.bundle_ref(dataset, model));
        const ConceptSpace space =
            fit_concept_space(bundle, extraction_method_from_string(method), k,
                              config.fit_seed, config.fit_options);
        write_concept_space(space, dir);
        std::cout << "extract " << id << " done (objective "
                  << space.fit_meta.final_objective << ")\n";
    }
}

void cmd_interpret(const ExperimentConfig& config, const StageOptions& opt) {
    PipelineContext ctx(config);
    for (const auto& [dataset, model, method, k] : space_tuples(config)) {
        for (const auto& interp_method : config.interpretation_methods) {
            const std::string id =
                space_id(dataset, model, method, k) + "__" + interp_method;
            const fs::path file = config.output_dir / "interpretations" / (id + ".json");
            if (opt.dry_run) {
                std::cout << "interpret " << id << "\n";
                continue;
            }
            if (fs::exists(file)) continue;
            const auto& bundle = ctx.bundle(ctx.bundle_ref(dataset, model));
            const auto& space = ctx.space(dataset, model, method, k);
            const auto interps = interpret_all(space, bundle, interp_method,
                                               ctx.bank ? &*ctx.bank : nullptr);
            write_text(file, interpretations_to_json(interps));
        }
    }
}

namespace {

PromptBundle build_setting_prompt(PipelineContext& ctx, const SettingKey& key) {
    const auto& bundle = ctx.bundle(ctx.bundle_ref(key.dataset_id, key.model_id));
    const SampleSplit split = select_samples(bundle, static_cast<std::uint64_t>(key.seed));

    PromptInputs inputs;
    const std::string base = key.prompt_type.substr(
        0, key.prompt_type.size() - (key.prompt_type.ends_with("-a") ? 2 : 0));
    const bool needs_expl = base == "E1" || base == "E2" || base == "E3";
    if (needs_expl) {
        inputs.report = &ctx.report(key.dataset_id, key.model_id, key.extraction_method,
                                    key.k);
        inputs.interpretations =
            &ctx.interpretation(key.dataset_id, key.model_id, key.extraction_method,
                                key.k, key.interpretation_method);
    }
    PromptBundle prompt = build_prompt(key, bundle, split, inputs);
    if (!check_label_non_leakage(prompt))
        throw std::runtime_error("label leakage detected in prompt for " +
                                 key.to_string());
    return prompt;
}

}  // namespace

void cmd_prompt(const ExperimentConfig& config, const StageOptions& opt) {
    PipelineContext ctx(config);
    auto settings = enumerate_settings(config, false);
    const auto validation = enumerate_settings(config, true);
    settings.insert(settings.end(), validation.begin(), validation.end());
    const std::string hash = config.config_hash();

    for (const auto& key : settings) {
        const fs::path dir = prompt_dir(config, key);
        if (opt.dry_run) {
            std::cout << "prompt " << key.to_string() << "\n";
            continue;
        }
        if (fs::exists(dir / "answers.json")) continue;
        const PromptBundle prompt = build_setting_prompt(ctx, key);
        write_text(dir / "system.txt", prompt.system_text);
        write_text(dir / "user.txt", prompt.user_text);
        json meta;
        meta["setting"] = key.to_string();
        meta["config_hash"] = hash;
        meta["answer_key"] = prompt.answer_key;
        meta["display_classes"] = prompt.display_classes;
        write_text(dir / "answers.json", meta.dump(2) + "\n");
    }
}

namespace {

PromptBundle load_prompt(const ExperimentConfig& cfg, const SettingKey& key) {
    const fs::path dir = prompt_dir(cfg, key);
    if (!fs::exists(dir / "answers.json"))
        throw std::runtime_error("missing prompt for setting " + key.to_string() +
                                 " (run the prompt stage first)");
    PromptBundle p;
    p.setting = key;
    p.system_text = read_text(dir / "system.txt");
    p.user_text = read_text(dir / "user.txt");
    const json meta = json::parse(read_text(dir / "answers.json"));
    p.answer_key = meta.at("answer_key").get<std::map<std::string, int>>();
    p.display_classes = meta.at("display_classes").get<std::vector<std::string>>();
    return p;
}

SimulationResult simulate_one(const ExperimentConfig& cfg, const PromptBundle& prompt) {
    const auto& sim = cfg.simulator;
    if (sim.kind == "mock") {
        MockMode mode = MockMode::Oracle;
        if (sim.mode == "lexical") mode = MockMode::Lexical;
        else if (sim.mode == "random") mode = MockMode::Random;
        else if (sim.mode != "oracle")
            throw std::invalid_argument("unknown mock mode: " + sim.mode);
        // per-setting stream so random answers differ across settings
        const std::uint64_t seed =
            sim.seed ^ crc32_string(prompt.setting.to_string());
        return score_response(prompt, mock_simulator(prompt, mode, seed));
    }
    if (sim.kind == "http")
        return run_simulator(prompt, make_http_simulator(sim.http));
    throw std::invalid_argument("unknown simulator kind: " + sim.kind);
}

}  // namespace

void cmd_simulate(const ExperimentConfig& config, const StageOptions& opt) {
    auto settings = enumerate_settings(config, false);
    const auto validation = enumerate_settings(config, true);
    settings.insert(settings.end(), validation.begin(), validation.end());
    const std::string hash = config.config_hash();
    const int workers =
        opt.parallelism_override > 0 ? opt.parallelism_override : config.parallelism;

    if (opt.dry_run) {
        for (const auto& key : settings) std::cout << "simulate " << key.to_string() << "\n";
        return;
    }

    run_parallel(settings.size(), workers, [&](std::size_t i) {
        const SettingKey& key = settings[i];
        const fs::path file = result_file(config, key);
        if (fs::exists(file)) return;
        const PromptBundle prompt = load_prompt(config, key);
        const SimulationResult result = simulate_one(config, prompt);
        write_text(config.output_dir / "responses" / (key.to_string() + ".txt"),
                   result.raw_response);
        json out;
        out["setting"] = key.to_string();
        out["config_hash"] = hash;
        out["accuracy"] = result.accuracy;
        out["parse_failures"] = result.parse_failures;
        write_text(file, out.dump(2) + "\n");
    });
}

void cmd_metrics(const ExperimentConfig& config, const StageOptions& opt) {
    if (opt.dry_run) {
        std::cout << "metrics -> " << (config.output_dir / "metrics.csv") << "\n";
        return;
    }
    PipelineContext ctx(config);
    std::ostringstream csv;
    csv << metrics_csv_header();
    for (const auto& [dataset, model, method, k] : space_tuples(config)) {
        const auto& bundle = ctx.bundle(ctx.bundle_ref(dataset, model));
        const auto& space = ctx.space(dataset, model, method, k);
        const auto& codes = ctx.space_codes(dataset, model, method, k);
        const auto& report = ctx.report(dataset, model, method, k);
        const MetricVector m = all_metrics(space, bundle, codes, report);
        SettingKey key{dataset, model, 0, method, "-", "-", config.simulator.id,
                       static_cast<int>(k)};
        csv << metrics_to_csv_row(key, m);
    }
    write_text(config.output_dir / "metrics.csv", csv.str());
}

// ---------------------------------------------------------------------------
// rank and report

std::map<SettingKey, double> load_results(const ExperimentConfig& config,
                                          bool validation) {
    std::map<SettingKey, double> out;
    long missing = 0;
    for (const auto& key : enumerate_settings(config, validation)) {
        const fs::path file = result_file(config, key);
        if (!fs::exists(file)) {
            ++missing;
            continue;
        }
        const json j = json::parse(read_text(file));
        out[key] = j.at("accuracy").get<double>();
    }
    if (missing > 0)
        std::cerr << "note: " << missing << (validation ? " validation" : " evaluation")
                  << " settings have no simulator result; ranking proceeds without them\n";
    return out;
}

std::map<std::pair<std::string, std::string>, long> select_best_k(
    const ExperimentConfig& config, const std::map<SettingKey, double>& validation) {
    // mean validation accuracy per (dataset, method, k)
    std::map<std::tuple<std::string, std::string, long>, std::pair<double, long>> acc;
    for (const auto& [key, a] : validation) {
        auto& slot = acc[{key.dataset_id, key.extraction_method, key.k}];
        slot.first += a;
        slot.second += 1;
    }
    std::map<std::pair<std::string, std::string>, std::pair<long, double>> best;
    for (const auto& [tup, sum] : acc) {
        const auto& [dataset, method, k] = tup;
        const double mean = sum.first / sum.second;
        auto it = best.find({dataset, method});
        // ties go to the smaller k; map iteration visits k ascending
        if (it == best.end() || mean > it->second.second)
            best[{dataset, method}] = {k, mean};
    }
    std::map<std::pair<std::string, std::string>, long> out;
    for (const auto& [dm, kv] : best) out[dm] = kv.first;
    return out;
}

namespace {

std::map<SettingKey, double> filter_to_best_k(
    const std::map<SettingKey, double>& results,
    const std::map<std::pair<std::string, std::string>, long>& best_k) {
    std::map<SettingKey, double> out;
    for (const auto& [key, acc] : results) {
        const auto it = best_k.find({key.dataset_id, key.extraction_method});
        if (it == best_k.end() || it->second != key.k) continue;
        SettingKey normalized = key;
        normalized.k = 0;  // chosen k differs per method; drop it from pairing
        out[normalized] = acc;
    }
    return out;
}

std::map<SettingKey, double> filter_prompt_types(
    const std::map<SettingKey, double>& results, const std::vector<std::string>& keep) {
    if (keep.empty()) return results;
    std::map<SettingKey, double> out;
    for (const auto& [key, acc] : results)
        if (std::find(keep.begin(), keep.end(), key.prompt_type) != keep.end())
            out[key] = acc;
    return out;
}

void write_comparison(const ExperimentConfig& cfg, const std::string& name,
                      const std::map<SettingKey, double>& results, CompareOn on) {
    const PairwiseMatrix matrix = copeland_matrix(results, on);
    const Ranking ranking = copeland_rank(matrix);
    write_text(cfg.output_dir / "rank" / (name + "_pairwise.csv"),
               pairwise_matrix_to_csv(matrix));
    write_text(cfg.output_dir / "rank" / (name + "_ranking.csv"),
               ranking_to_csv(ranking));
    if (matrix.dropped_settings > 0)
        write_text(cfg.output_dir / "rank" / (name + "_exclusions.txt"),
                   std::to_string(matrix.dropped_settings) +
                       " settings had no counterpart in some pairwise comparison and "
                       "were dropped for those pairs\n");
}

}  // namespace

void cmd_rank(const ExperimentConfig& config, const StageOptions& opt) {
    if (opt.dry_run) {
        std::cout << "rank -> " << (config.output_dir / "rank") << "\n";
        return;
    }
    const auto eval = load_results(config, false);
    const auto validation = load_results(config, true);
    if (eval.empty()) throw std::runtime_error("rank: no evaluation results found");

    std::map<SettingKey, double> ranked = eval;
    if (!validation.empty() && config.k_values.size() > 1) {
        const auto best_k = select_best_k(config, validation);
        json chosen;
        for (const auto& [dm, k] : best_k) chosen[dm.first + "__" + dm.second] = k;
        write_text(config.output_dir / "rank" / "best_k.json", chosen.dump(2) + "\n");
        ranked = filter_to_best_k(eval, best_k);
    }

    write_comparison(config, "extraction",
                     filter_prompt_types(ranked, config.rank_prompt_types),
                     CompareOn::ExtractionMethod);
    if (config.interpretation_methods.size() > 1)
        write_comparison(config, "interpretation",
                         filter_prompt_types(ranked, config.rank_prompt_types),
                         CompareOn::InterpretationMethod);
    if (config.prompt_types.size() > 1)
        write_comparison(config, "prompt_types", ranked, CompareOn::PromptType);
}

void cmd_report(const ExperimentConfig& config, const StageOptions& opt) {
    if (opt.dry_run) {
        std::cout << "report -> " << (config.output_dir / "report") << "\n";
        return;
    }
    const fs::path rank_dir = config.output_dir / "rank";
    if (!fs::exists(rank_dir / "extraction_ranking.csv"))
        throw std::runtime_error("report: rank outputs missing (run the rank stage first)");

    // method -> rank
    std::map<std::string, double> rank_of;
    {
        std::istringstream is(read_text(rank_dir / "extraction_ranking.csv"));
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            const auto comma = line.find(',');
            if (comma == std::string::npos) continue;
            rank_of[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
        }
    }

    // mean metric per extraction method from metrics.csv
    const fs::path metrics_file = config.output_dir / "metrics.csv";
    if (!fs::exists(metrics_file))
        throw std::runtime_error("report: metrics.csv missing (run the metrics stage first)");
    std::map<std::string, std::vector<std::vector<double>>> per_method;  // 11 columns
    {
        std::istringstream is(read_text(metrics_file));
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            std::vector<std::string> cells;
            std::istringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) cells.push_back(cell);
            if (cells.size() != 12) continue;
            // setting id embeds the method as its 4th "__" field
            std::vector<std::string> parts;
            std::string rest = cells[0];
            std::size_t pos;
            while ((pos = rest.find("__")) != std::string::npos) {
                parts.push_back(rest.substr(0, pos));
                rest = rest.substr(pos + 2);
            }
            parts.push_back(rest);
            if (parts.size() < 4) continue;
            const std::string method = parts[3];
            auto& rows = per_method[method];
            std::vector<double> vals;
            for (std::size_t i = 1; i < cells.size(); ++i)
                vals.push_back(cells[i] == "undefined" ? std::nan("") :
                                                         std::stod(cells[i]));
            rows.push_back(vals);
        }
    }

    static const char* metric_names[] = {
        "nb_concepts", "nb_activated", "ratio_activated", "cosine_similarity",
        "covariance", "nb_important", "ratio_important", "latents_l2", "logits_l2",
        "logits_kl", "completeness"};

    std::ostringstream csv;
    csv << "metric,spearman_rho_vs_rank\n";
    for (std::size_t mi = 0; mi < std::size(metric_names); ++mi) {
        std::vector<double> ranks, values;
        for (const auto& [method, rows] : per_method) {
            const auto it = rank_of.find(method);
            if (it == rank_of.end()) continue;
            double sum = 0.0;
            long count = 0;
            for (const auto& row : rows) {
                if (!std::isnan(row[mi])) {
                    sum += row[mi];
                    ++count;
                }
            }
            if (count == 0) continue;
            ranks.push_back(it->second);
            values.push_back(sum / count);
        }
        csv << metric_names[mi] << ',';
        if (ranks.size() >= 2) {
            const auto rho = spearman_rho(ranks, values);
            if (rho)
                csv << *rho;
            else
                csv << "undefined";
        } else {
            csv << "undefined";
        }
        csv << '\n';
    }
    write_text(config.output_dir / "report" / "metric_correlations.csv", csv.str());

    std::ostringstream summary;
    summary << "extraction ranking:\n"
            << read_text(rank_dir / "extraction_ranking.csv") << "\n";
    if (fs::exists(rank_dir / "prompt_types_ranking.csv"))
        summary << "prompt type ranking:\n"
                << read_text(rank_dir / "prompt_types_ranking.csv") << "\n";
    summary << "metric correlations written to report/metric_correlations.csv\n";
    write_text(config.output_dir / "report" / "summary.txt", summary.str());
}

}  // namespace cbeval
