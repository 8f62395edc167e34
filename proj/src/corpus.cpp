#include "cbeval/corpus.hpp"

#include "cbeval/rng.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cbeval {

using nlohmann::json;
namespace fs = std::filesystem;

Matrix ActivationBundle::logits() const {
    return (activations * head_weights).rowwise() + head_bias.transpose();
}

namespace {

int argmax_row(const Eigen::RowVectorXd& row) {
    // ties broken toward the lowest class index
    int best = 0;
    for (int j = 1; j < row.size(); ++j) {
        if (row(j) > row(best)) best = j;
    }
    return best;
}

}  // namespace

void ActivationBundle::validate() const {
    const long rows = activations.rows();
    if (static_cast<long>(samples.size()) != rows)
        throw std::runtime_error("bundle: samples length does not match activation rows");
    if (static_cast<long>(predictions.size()) != rows)
        throw std::runtime_error("bundle: predictions length does not match activation rows");
    if (static_cast<long>(labels.size()) != rows)
        throw std::runtime_error("bundle: labels length does not match activation rows");
    if (head_weights.rows() != activations.cols())
        throw std::runtime_error("bundle: head_weights row count does not match p");
    if (head_weights.cols() != num_classes() || head_bias.size() != num_classes())
        throw std::runtime_error("bundle: head shape does not match class count");
    if (vocab_activations.rows() != static_cast<long>(vocab_words.size()))
        throw std::runtime_error("bundle: vocab_words length does not match vocab_activations rows");
    if (vocab_activations.rows() > 0 && vocab_activations.cols() != activations.cols())
        throw std::runtime_error("bundle: vocab_activations column count does not match p");
    if (nonneg_flag) {
        if (activations.size() > 0 && activations.minCoeff() < 0.0)
            throw std::runtime_error("bundle: nonneg_flag set but activations have negative entries");
        if (vocab_activations.size() > 0 && vocab_activations.minCoeff() < 0.0)
            throw std::runtime_error("bundle: nonneg_flag set but vocab_activations have negative entries");
    }
    const Matrix z = logits();
    for (long i = 0; i < rows; ++i) {
        if (predictions[i] < 0 || predictions[i] >= num_classes())
            throw std::runtime_error("bundle: prediction out of class range");
        if (argmax_row(z.row(i)) != predictions[i])
            throw std::runtime_error("bundle: inconsistent predictions (stored prediction disagrees with head argmax at row " +
                                     std::to_string(i) + ")");
    }
}

void ConceptLabelBank::validate(long p) const {
    for (const auto& e : entries) {
        if (e.sentences.empty())
            throw std::runtime_error("label bank: entry '" + e.label + "' has no sentences");
        if (e.sentence_activations.rows() != static_cast<long>(e.sentences.size()) ||
            e.sentence_activations.cols() != p)
            throw std::runtime_error("label bank: entry '" + e.label + "' activation shape mismatch");
    }
}

std::string SettingKey::to_string() const {
    std::ostringstream os;
    os << dataset_id << "__" << model_id << "__s" << seed << "__" << extraction_method
       << "__" << interpretation_method << "__" << prompt_type << "__" << simulator_id
       << "__k" << k;
    return os.str();
}

// ---------------------------------------------------------------------------
// matrix / list persistence

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int j = 0; j < 8; ++j)
            c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

std::uint32_t crc32_bytes(const char* data, std::size_t len) {
    static const auto table = make_crc_table();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ static_cast<unsigned char>(data[i])) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

std::string read_file_bytes(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_lines(const std::vector<std::string>& lines, const fs::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    for (const auto& s : lines) out << s << '\n';
}

std::vector<std::string> read_lines(const fs::path& file, std::size_t expected) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (lines.size() != expected)
        throw std::runtime_error(file.string() + ": expected " + std::to_string(expected) +
                                 " lines, found " + std::to_string(lines.size()));
    return lines;
}

void write_ints(const std::vector<int>& v, const fs::path& file) {
    std::vector<std::string> lines;
    lines.reserve(v.size());
    for (int x : v) lines.push_back(std::to_string(x));
    write_lines(lines, file);
}

std::vector<int> read_ints(const fs::path& file, std::size_t expected) {
    auto lines = read_lines(file, expected);
    std::vector<int> v;
    v.reserve(lines.size());
    for (const auto& s : lines) v.push_back(std::stoi(s));
    return v;
}

}  // namespace

void write_matrix_f32(const Matrix& m, const fs::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    std::vector<float> buf(static_cast<std::size_t>(m.rows()) * m.cols());
    std::size_t idx = 0;
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j)
            buf[idx++] = static_cast<float>(m(i, j));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Matrix read_matrix_f32(const fs::path& file, long rows, long cols) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
        throw std::runtime_error(file.string() + ": truncated matrix file");
    Matrix m(rows, cols);
    std::size_t idx = 0;
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j)
            m(i, j) = static_cast<double>(buf[idx++]);
    return m;
}

std::uint32_t crc32_file(const fs::path& file) {
    const std::string bytes = read_file_bytes(file);
    return crc32_bytes(bytes.data(), bytes.size());
}

std::uint32_t crc32_string(const std::string& data) {
    return crc32_bytes(data.data(), data.size());
}

// ---------------------------------------------------------------------------
// bundle directory format

namespace {

void record_checksum(json& manifest, const fs::path& dir, const std::string& name) {
    manifest["checksums"][name] = crc32_file(dir / name);
}

void verify_checksum(const json& manifest, const fs::path& dir, const std::string& name) {
    const std::uint32_t expected = manifest.at("checksums").at(name).get<std::uint32_t>();
    const std::uint32_t actual = crc32_file(dir / name);
    if (expected != actual)
        throw std::runtime_error("integrity error: checksum mismatch for " + (dir / name).string());
}

}  // namespace

void write_bundle(const ActivationBundle& bundle, const fs::path& dir) {
    bundle.validate();
    fs::create_directories(dir);

    write_matrix_f32(bundle.activations, dir / "activations.f32");
    write_matrix_f32(bundle.head_weights, dir / "head_weights.f32");
    write_matrix_f32(bundle.head_bias.transpose(), dir / "head_bias.f32");
    write_matrix_f32(bundle.vocab_activations, dir / "vocab_activations.f32");
    write_lines(bundle.samples, dir / "samples.txt");
    write_lines(bundle.class_names, dir / "class_names.txt");
    write_lines(bundle.vocab_words, dir / "vocab_words.txt");
    write_ints(bundle.predictions, dir / "predictions.txt");
    write_ints(bundle.labels, dir / "labels.txt");

    json manifest;
    manifest["format"] = "activation-bundle";
    manifest["version"] = 1;
    manifest["n"] = bundle.n();
    manifest["p"] = bundle.p();
    manifest["classes"] = bundle.num_classes();
    manifest["vocab_size"] = bundle.vocab_activations.rows();
    manifest["nonneg"] = bundle.nonneg_flag;
    manifest["provenance"] = bundle.provenance;
    for (const char* name : {"activations.f32", "head_weights.f32", "head_bias.f32",
                             "vocab_activations.f32", "samples.txt", "class_names.txt",
                             "vocab_words.txt", "predictions.txt", "labels.txt"}) {
        record_checksum(manifest, dir, name);
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

ActivationBundle read_bundle(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("missing manifest: " + (dir / "manifest.json").string());
    json manifest = json::parse(in);
    if (manifest.value("format", "") != "activation-bundle")
        throw std::runtime_error(dir.string() + ": not an activation bundle");

    const long n = manifest.at("n").get<long>();
    const long p = manifest.at("p").get<long>();
    const long classes = manifest.at("classes").get<long>();
    const long m = manifest.at("vocab_size").get<long>();

    for (const auto& [name, _] : manifest.at("checksums").items())
        verify_checksum(manifest, dir, name);

    ActivationBundle b;
    b.activations = read_matrix_f32(dir / "activations.f32", n, p);
    b.head_weights = read_matrix_f32(dir / "head_weights.f32", p, classes);
    b.head_bias = read_matrix_f32(dir / "head_bias.f32", 1, classes).row(0).transpose();
    b.vocab_activations = read_matrix_f32(dir / "vocab_activations.f32", m, p);
    b.samples = read_lines(dir / "samples.txt", static_cast<std::size_t>(n));
    b.class_names = read_lines(dir / "class_names.txt", static_cast<std::size_t>(classes));
    b.vocab_words = read_lines(dir / "vocab_words.txt", static_cast<std::size_t>(m));
    b.predictions = read_ints(dir / "predictions.txt", static_cast<std::size_t>(n));
    b.labels = read_ints(dir / "labels.txt", static_cast<std::size_t>(n));
    b.nonneg_flag = manifest.at("nonneg").get<bool>();
    b.provenance = manifest.value("provenance", "");
    b.validate();
    return b;
}

void write_label_bank(const ConceptLabelBank& bank, const fs::path& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "concept-label-bank";
    manifest["version"] = 1;
    json entries = json::array();
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
        const auto& e = bank.entries[i];
        const std::string mat = "entry_" + std::to_string(i) + ".f32";
        const std::string txt = "entry_" + std::to_string(i) + ".txt";
        write_matrix_f32(e.sentence_activations, dir / mat);
        write_lines(e.sentences, dir / txt);
        json je;
        je["label"] = e.label;
        je["sentences"] = e.sentences.size();
        je["p"] = e.sentence_activations.cols();
        entries.push_back(je);
        record_checksum(manifest, dir, mat);
        record_checksum(manifest, dir, txt);
    }
    manifest["entries"] = entries;
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
}

ConceptLabelBank read_label_bank(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("missing manifest: " + (dir / "manifest.json").string());
    json manifest = json::parse(in);
    if (manifest.value("format", "") != "concept-label-bank")
        throw std::runtime_error(dir.string() + ": not a concept label bank");
    for (const auto& [name, _] : manifest.at("checksums").items())
        verify_checksum(manifest, dir, name);
    ConceptLabelBank bank;
    const auto& entries = manifest.at("entries");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        ConceptLabelBank::Entry e;
        e.label = entries[i].at("label").get<std::string>();
        const long rows = entries[i].at("sentences").get<long>();
        const long p = entries[i].at("p").get<long>();
        e.sentence_activations =
            read_matrix_f32(dir / ("entry_" + std::to_string(i) + ".f32"), rows, p);
        e.sentences = read_lines(dir / ("entry_" + std::to_string(i) + ".txt"),
                                 static_cast<std::size_t>(rows));
        bank.entries.push_back(std::move(e));
    }
    return bank;
}

// ---------------------------------------------------------------------------
// synthetic bundles

SyntheticBundle generate_synthetic_bundle(const SyntheticOptions& opt) {
    if (opt.k_true > opt.p)
        throw std::invalid_argument("generate_synthetic_bundle: k_true exceeds p");
    if (opt.n < 2 * opt.classes)
        throw std::invalid_argument("generate_synthetic_bundle: need n >= 2*classes");

    Rng rng(opt.seed);
    const long n = opt.n, p = opt.p;
    const int k = opt.k_true, classes = opt.classes;

    // Sparse planted directions with near-disjoint supports so that NMF-style
    // recovery and word-level interpretation are both well posed.
    Matrix D = Matrix::Zero(k, p);
    const long support = std::max<long>(2, p / k);
    for (int j = 0; j < k; ++j) {
        for (long s = 0; s < support; ++s) {
            const long col = (static_cast<long>(j) * support + s) % p;
            D(j, col) = 0.5 + rng.uniform();
        }
        // one extra off-support coordinate keeps directions from being axis blocks
        D(j, rng.uniform_int(static_cast<std::uint64_t>(p))) += 0.3 * rng.uniform();
        if (!opt.nonneg) {
            for (long c = 0; c < p; ++c)
                if (D(j, c) != 0.0 && rng.uniform() < 0.4) D(j, c) = -D(j, c);
        }
        D.row(j) /= D.row(j).norm();
    }

    // Concept j is owned by class j mod classes; the head sums its class's
    // planted directions so prediction follows the dominant active concept.
    Matrix W = Matrix::Zero(p, classes);
    for (int j = 0; j < k; ++j) W.col(j % classes) += D.row(j).transpose();
    Vector bias = Vector::Zero(classes);

    // Tokens naming each planted concept; also become the vocab pool. Five
    // words per concept so a top-5 word ranking can stay within one concept.
    SyntheticBundle out;
    out.planted_directions = D;
    std::vector<std::string> vocab;
    for (int j = 0; j < k; ++j) {
        std::vector<std::string> toks;
        for (int m = 0; m < 5; ++m)
            toks.push_back("concept" + std::to_string(j) + "word" + std::to_string(m));
        for (const auto& t : toks) vocab.push_back(t);
        out.concept_tokens.push_back(std::move(toks));
    }

    ActivationBundle b;
    b.class_names.reserve(classes);
    for (int c = 0; c < classes; ++c) b.class_names.push_back("class" + std::to_string(c));

    Matrix A = Matrix::Zero(n, p);
    b.labels.resize(n);
    b.samples.resize(n);
    double noise_sq = 0.0;

    for (long i = 0; i < n; ++i) {
        const int target = static_cast<int>(i % classes);
        const bool confuse = rng.uniform() < opt.mislabel_fraction;
        // pick the class whose concepts drive the activation; when confusing,
        // generate for another class but keep `target` as the ground-truth label
        int active_class = target;
        if (confuse && classes > 1) {
            active_class = static_cast<int>(rng.uniform_int(classes - 1));
            if (active_class >= target) ++active_class;
        }

        Vector code = Vector::Zero(k);
        bool any = false;
        double own_total = 0.0;
        for (int j = 0; j < k; ++j) {
            if (j % classes == active_class) {
                code(j) = 1.0 + rng.exponential(1.5);
                own_total += code(j);
                any = true;
            } else if (opt.cross_activation <= 0.0 && rng.uniform() < 0.15) {
                code(j) = 0.2 * rng.uniform();
            }
        }
        if (!any) code(active_class % k) = 1.0;
        if (opt.cross_activation > 0.0) {
            // intensity-coupled co-activation of every off-class concept
            for (int j = 0; j < k; ++j)
                if (j % classes != active_class)
                    code(j) = opt.cross_activation * own_total *
                              (0.3 + 0.4 * rng.uniform());
        }

        Vector a = D.transpose() * code;
        for (long c = 0; c < p; ++c) {
            const double eps = opt.noise_level * rng.normal();
            double v = a(c) + eps;
            if (opt.nonneg && v < 0.0) v = 0.0;
            noise_sq += (v - a(c)) * (v - a(c));
            a(c) = v;
        }
        A.row(i) = a.transpose();
        b.labels[i] = target;

        // bag of concept-named tokens, repeated by rounded intensity
        std::string text;
        for (int j = 0; j < k; ++j) {
            const int reps = static_cast<int>(std::min(3.0, std::floor(code(j) + 0.5)));
            for (int r = 0; r < reps; ++r) {
                const auto& tok = out.concept_tokens[j][r % out.concept_tokens[j].size()];
                if (!text.empty()) text += ' ';
                text += tok;
            }
        }
        if (text.empty()) text = "empty";
        b.samples[i] = text;
    }
    out.noise_norm = std::sqrt(noise_sq);

    b.activations = std::move(A);
    b.head_weights = W;
    b.head_bias = bias;
    b.nonneg_flag = opt.nonneg;
    b.provenance = "synthetic planted bundle, seed " + std::to_string(opt.seed);

    // vocab embeddings: each word sits on its concept direction with mild
    // seeded scale jitter
    b.vocab_words = vocab;
    b.vocab_activations = Matrix::Zero(static_cast<long>(vocab.size()), p);
    for (std::size_t w = 0; w < vocab.size(); ++w) {
        const int j = static_cast<int>(w) / 5;
        b.vocab_activations.row(static_cast<long>(w)) =
            D.row(j) * (1.0 + 0.1 * rng.uniform());
    }

    // predictions come straight from the derived head, so self-consistency
    // holds by construction
    const Matrix z = (b.activations * b.head_weights).rowwise() + b.head_bias.transpose();
    b.predictions.resize(n);
    for (long i = 0; i < n; ++i) b.predictions[i] = argmax_row(z.row(i));

    b.validate();
    out.bundle = std::move(b);
    return out;
}

}  // namespace cbeval
