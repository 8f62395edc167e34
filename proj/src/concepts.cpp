#include "cbeval/concepts.hpp"

#include "cbeval/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace cbeval {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(ExtractionMethod m) {
    switch (m) {
        case ExtractionMethod::NoProjection: return "NoProjection";
        case ExtractionMethod::PCA: return "PCA";
        case ExtractionMethod::SVD: return "SVD";
        case ExtractionMethod::ICA: return "ICA";
        case ExtractionMethod::NMF: return "NMF";
        case ExtractionMethod::SAE: return "SAE";
    }
    return "?";
}

ExtractionMethod extraction_method_from_string(const std::string& name) {
    if (name == "NoProjection") return ExtractionMethod::NoProjection;
    if (name == "PCA") return ExtractionMethod::PCA;
    if (name == "SVD") return ExtractionMethod::SVD;
    if (name == "ICA") return ExtractionMethod::ICA;
    if (name == "NMF") return ExtractionMethod::NMF;
    if (name == "SAE") return ExtractionMethod::SAE;
    throw std::invalid_argument("unknown extraction method: " + name);
}

namespace {

// Deterministic sign convention: flip each column so its largest-magnitude
// entry is positive.
void flip_signs(Matrix& basis) {
    for (long j = 0; j < basis.cols(); ++j) {
        long idx;
        basis.col(j).cwiseAbs().maxCoeff(&idx);
        if (basis(idx, j) < 0.0) basis.col(j) = -basis.col(j);
    }
}

Matrix random_matrix(Rng& rng, long rows, long cols, bool nonneg) {
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j)
            m(i, j) = nonneg ? rng.uniform() : rng.normal();
    return m;
}

Matrix pseudo_inverse(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double tol = 1e-12 * std::max(m.rows(), m.cols()) * svd.singularValues()(0);
    Vector inv_sv = svd.singularValues();
    for (long i = 0; i < inv_sv.size(); ++i)
        inv_sv(i) = inv_sv(i) > tol ? 1.0 / inv_sv(i) : 0.0;
    return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

// Symmetric decorrelation: W <- (W W^T)^(-1/2) W.
Matrix sym_decorrelate(const Matrix& w) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(w * w.transpose());
    Vector ev = es.eigenvalues().cwiseMax(1e-15);
    Matrix inv_sqrt = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                      es.eigenvectors().transpose();
    return inv_sqrt * w;
}

void fit_pca(ConceptSpace& s, const Matrix& acts, long k) {
    const Vector mu = acts.colwise().mean();
    Matrix centered = acts.rowwise() - mu.transpose();
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    Matrix basis = svd.matrixV().leftCols(k);
    flip_signs(basis);
    s.mean = mu;
    s.encode_weights = basis;
    s.decode_weights = basis.transpose();
    s.decode_bias = mu;
    s.fit_codes = centered * basis;
}

void fit_svd(ConceptSpace& s, const Matrix& acts, long k) {
    Eigen::BDCSVD<Matrix> svd(acts, Eigen::ComputeThinV);
    Matrix basis = svd.matrixV().leftCols(k);
    flip_signs(basis);
    s.mean = Vector::Zero(acts.cols());
    s.encode_weights = basis;
    s.decode_weights = basis.transpose();
    s.decode_bias = Vector::Zero(acts.cols());
    s.fit_codes = acts * basis;
}

void fit_ica(ConceptSpace& s, const Matrix& acts, long k, std::uint64_t seed,
             const FitOptions& opt) {
    const long n = acts.rows();
    const Vector mu = acts.colwise().mean();
    Matrix centered = acts.rowwise() - mu.transpose();

    // PCA whitening to k components
    Eigen::SelfAdjointEigenSolver<Matrix> es(centered.transpose() * centered /
                                             static_cast<double>(n));
    // eigenvalues ascending; take the top k
    Matrix white(k, acts.cols());
    for (long j = 0; j < k; ++j) {
        const long src = acts.cols() - 1 - j;
        const double ev = std::max(es.eigenvalues()(src), 1e-15);
        white.row(j) = es.eigenvectors().col(src).transpose() / std::sqrt(ev);
    }
    Matrix z = white * centered.transpose();  // k x n, unit variance rows

    Rng rng(seed);
    Matrix w = sym_decorrelate(random_matrix(rng, k, k, false));

    int iter = 0;
    bool converged = false;
    for (; iter < opt.ica_max_iterations; ++iter) {
        const Matrix y = w * z;                      // k x n
        const Matrix g = y.array().tanh();           // logcosh contrast
        const Vector g_prime = (1.0 - g.array().square()).rowwise().mean();
        Matrix w_new = g * z.transpose() / static_cast<double>(n) -
                       g_prime.asDiagonal() * w;
        w_new = sym_decorrelate(w_new);
        const double delta =
            ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0)
                .abs()
                .maxCoeff();
        w = w_new;
        if (delta < opt.ica_tolerance) {
            converged = true;
            ++iter;
            break;
        }
    }

    const Matrix unmixing = w * white;               // k x p
    const Matrix mixing = pseudo_inverse(unmixing);  // p x k

    s.mean = mu;
    s.encode_weights = unmixing.transpose();
    s.decode_weights = mixing.transpose();
    s.decode_bias = mu;
    s.fit_codes = centered * s.encode_weights;
    s.fit_meta.iterations = iter;
    s.fit_meta.converged = converged;
}

double frobenius(const Matrix& m) { return m.norm(); }

void fit_nmf(ConceptSpace& s, const Matrix& acts, long k, std::uint64_t seed,
             const FitOptions& opt) {
    constexpr double kEps = 1e-12;
    const long n = acts.rows(), p = acts.cols();
    Rng rng(seed);
    const double scale = std::sqrt(std::max(acts.mean(), kEps) / static_cast<double>(k));
    Matrix u = random_matrix(rng, n, k, true) * scale;   // codes
    Matrix w = random_matrix(rng, k, p, true) * scale;   // dictionary

    double prev = frobenius(acts - u * w);
    s.fit_meta.objective_history.push_back(prev);
    int iter = 0;
    bool converged = false;
    for (; iter < opt.nmf_max_iterations; ++iter) {
        u = u.cwiseProduct(acts * w.transpose())
                .cwiseQuotient((u * (w * w.transpose())).array().max(kEps).matrix());
        w = w.cwiseProduct(u.transpose() * acts)
                .cwiseQuotient(((u.transpose() * u) * w).array().max(kEps).matrix());
        const double obj = frobenius(acts - u * w);
        s.fit_meta.objective_history.push_back(obj);
        const double rel = (prev - obj) / std::max(prev, kEps);
        prev = obj;
        if (rel < opt.nmf_tolerance && rel >= 0.0) {
            converged = true;
            ++iter;
            break;
        }
    }

    s.mean = Vector::Zero(p);
    s.encode_weights = Matrix::Zero(p, k);  // unused; encode solves NNLS
    s.decode_weights = w;
    s.decode_bias = Vector::Zero(p);
    s.nmf_dictionary = w;
    s.fit_codes = u;
    s.nonneg_codes = true;
    s.fit_meta.iterations = iter;
    s.fit_meta.converged = converged;
    s.fit_meta.final_objective = prev;
}

// Nonnegative least squares against a fixed dictionary: warm-start from the
// clipped unconstrained solution, then multiplicative updates.
Matrix nmf_encode(const Matrix& acts, const Matrix& dict, const FitOptions& opt) {
    constexpr double kEps = 1e-12;
    Matrix u = (acts * pseudo_inverse(dict)).cwiseMax(1e-6);
    const Matrix gram = dict * dict.transpose();
    const Matrix target = acts * dict.transpose();
    double prev = frobenius(acts - u * dict);
    for (int iter = 0; iter < opt.nmf_encode_max_iterations; ++iter) {
        u = u.cwiseProduct(target).cwiseQuotient((u * gram).array().max(kEps).matrix());
        const double obj = frobenius(acts - u * dict);
        const double rel = (prev - obj) / std::max(prev, kEps);
        prev = obj;
        if (std::abs(rel) < opt.nmf_encode_tolerance) break;
    }
    return u;
}

void fit_sae(ConceptSpace& s, const Matrix& acts, long k, std::uint64_t seed,
             const FitOptions& opt) {
    const long n = acts.rows(), p = acts.cols();
    Rng rng(seed);
    const Vector mu = acts.colwise().mean();
    const Matrix centered = acts.rowwise() - mu.transpose();

    const double init_scale = 1.0 / std::sqrt(static_cast<double>(p));
    Matrix w_enc = random_matrix(rng, p, k, false) * init_scale;
    Vector b_enc = Vector::Zero(k);
    Matrix w_dec = random_matrix(rng, k, p, false);
    for (long j = 0; j < k; ++j) w_dec.row(j).normalize();

    std::vector<long> since_active(k, 0);  // inputs seen since a neuron last fired
    const int batch = std::min<long>(opt.sae_batch_size, n);

    for (int step = 0; step < opt.sae_steps; ++step) {
        const double lr = opt.sae_learning_rate *
                          (1.0 - static_cast<double>(step) / opt.sae_steps);

        Matrix x(batch, p);
        std::vector<long> rows(batch);
        for (int b = 0; b < batch; ++b) {
            rows[b] = static_cast<long>(rng.uniform_int(n));
            x.row(b) = centered.row(rows[b]);
        }

        const Matrix pre = (x * w_enc).rowwise() + b_enc.transpose();
        const Matrix codes = pre.cwiseMax(0.0);
        const Matrix recon = codes * w_dec;
        const Matrix err = recon - x;

        const double loss = err.squaredNorm() / batch +
                            opt.sae_l1_coefficient * codes.array().abs().sum() / batch;
        if (!std::isfinite(loss))
            throw std::runtime_error("SAE training diverged (non-finite loss)");

        for (long j = 0; j < k; ++j) {
            if ((codes.col(j).array() > 0.0).any())
                since_active[j] = 0;
            else
                since_active[j] += batch;
        }

        Matrix d_codes = 2.0 * err * w_dec.transpose();
        d_codes.array() += opt.sae_l1_coefficient;  // codes are >= 0, so sign = 1
        const Matrix mask = (pre.array() > 0.0).cast<double>();
        d_codes = d_codes.cwiseProduct(mask);

        const Matrix d_w_dec = codes.transpose() * (2.0 * err) / batch;
        const Matrix d_w_enc = x.transpose() * d_codes / batch;
        const Vector d_b_enc = d_codes.colwise().mean();

        w_dec -= lr * d_w_dec;
        w_enc -= lr * d_w_enc;
        b_enc -= lr * d_b_enc;
        for (long j = 0; j < k; ++j) {
            const double norm = w_dec.row(j).norm();
            if (norm > 1e-12) w_dec.row(j) /= norm;
        }

        if ((step + 1) % opt.sae_resample_every == 0) {
            // high-loss input of this batch becomes the new direction
            long worst;
            err.rowwise().squaredNorm().maxCoeff(&worst);
            Vector dir = x.row(worst).transpose();
            if (dir.norm() > 1e-12) dir.normalize();
            for (long j = 0; j < k; ++j) {
                if (since_active[j] < opt.sae_resample_window) continue;
                w_dec.row(j) = dir.transpose();
                w_enc.col(j) = 0.2 * dir;
                b_enc(j) = 0.0;
                since_active[j] = 0;
            }
        }

        if (step % 100 == 0) s.fit_meta.objective_history.push_back(loss);
    }

    s.mean = mu;
    s.encode_weights = w_enc;
    s.encode_bias = b_enc;
    s.decode_weights = w_dec;
    s.decode_bias = mu;
    s.relu_codes = true;
    s.nonneg_codes = true;
    s.fit_meta.iterations = opt.sae_steps;
    s.fit_meta.final_objective =
        s.fit_meta.objective_history.empty() ? 0.0 : s.fit_meta.objective_history.back();
}

}  // namespace

ConceptSpace fit_concept_space(const ActivationBundle& bundle, ExtractionMethod method,
                               long k, std::uint64_t seed, const FitOptions& opt) {
    const Matrix& acts = bundle.activations;
    const long p = acts.cols();
    if (k < 1) throw std::invalid_argument("fit_concept_space: k must be >= 1");
    if (method != ExtractionMethod::NoProjection && method != ExtractionMethod::SAE &&
        method != ExtractionMethod::NMF && k > p)
        throw std::invalid_argument("fit_concept_space: k exceeds latent dimension p");
    if (method == ExtractionMethod::NMF && !bundle.nonneg_flag)
        throw std::invalid_argument("NMF requires nonnegative embeddings");

    ConceptSpace s;
    s.method = method;
    s.p = p;
    s.k = method == ExtractionMethod::NoProjection ? p : k;
    s.fit_meta.seed = seed;
    s.encode_bias = Vector::Zero(s.k);

    switch (method) {
        case ExtractionMethod::NoProjection:
            s.mean = Vector::Zero(p);
            s.encode_weights = Matrix::Identity(p, p);
            s.decode_weights = Matrix::Identity(p, p);
            s.decode_bias = Vector::Zero(p);
            s.fit_codes = acts;
            break;
        case ExtractionMethod::PCA:
            fit_pca(s, acts, k);
            break;
        case ExtractionMethod::SVD:
            fit_svd(s, acts, k);
            break;
        case ExtractionMethod::ICA:
            fit_ica(s, acts, k, seed, opt);
            break;
        case ExtractionMethod::NMF:
            fit_nmf(s, acts, k, seed, opt);
            break;
        case ExtractionMethod::SAE:
            fit_sae(s, acts, k, seed, opt);
            break;
    }
    s.encode_bias.conservativeResize(s.k);
    return s;
}

Matrix encode(const ConceptSpace& space, const Matrix& acts, const FitOptions& opt) {
    if (acts.cols() != space.p)
        throw std::invalid_argument("encode: input has " + std::to_string(acts.cols()) +
                                    " columns, expected " + std::to_string(space.p));
    if (space.method == ExtractionMethod::NMF)
        return nmf_encode(acts, space.nmf_dictionary, opt);
    Matrix codes = ((acts.rowwise() - space.mean.transpose()) * space.encode_weights)
                       .rowwise() +
                   space.encode_bias.transpose();
    if (space.relu_codes) codes = codes.cwiseMax(0.0);
    return codes;
}

Matrix decode(const ConceptSpace& space, const Matrix& codes) {
    if (codes.cols() != space.k)
        throw std::invalid_argument("decode: input has " + std::to_string(codes.cols()) +
                                    " columns, expected " + std::to_string(space.k));
    return (codes * space.decode_weights).rowwise() + space.decode_bias.transpose();
}

Matrix concept_logits(const ConceptSpace& space, const ActivationBundle& bundle,
                      const Matrix& codes) {
    return (decode(space, codes) * bundle.head_weights).rowwise() +
           bundle.head_bias.transpose();
}

void write_concept_space(const ConceptSpace& space, const fs::path& dir) {
    fs::create_directories(dir);
    write_matrix_f32(space.encode_weights, dir / "encode_weights.f32");
    write_matrix_f32(space.encode_bias.transpose(), dir / "encode_bias.f32");
    write_matrix_f32(space.mean.transpose(), dir / "mean.f32");
    write_matrix_f32(space.decode_weights, dir / "decode_weights.f32");
    write_matrix_f32(space.decode_bias.transpose(), dir / "decode_bias.f32");
    write_matrix_f32(space.fit_codes, dir / "fit_codes.f32");
    write_matrix_f32(space.nmf_dictionary, dir / "nmf_dictionary.f32");

    json manifest;
    manifest["format"] = "concept-space";
    manifest["method"] = to_string(space.method);
    manifest["k"] = space.k;
    manifest["p"] = space.p;
    manifest["fit_rows"] = space.fit_codes.rows();
    manifest["dict_rows"] = space.nmf_dictionary.rows();
    manifest["relu_codes"] = space.relu_codes;
    manifest["nonneg_codes"] = space.nonneg_codes;
    manifest["seed"] = space.fit_meta.seed;
    manifest["iterations"] = space.fit_meta.iterations;
    manifest["final_objective"] = space.fit_meta.final_objective;
    manifest["converged"] = space.fit_meta.converged;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

ConceptSpace read_concept_space(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("missing manifest: " + (dir / "manifest.json").string());
    json manifest = json::parse(in);
    if (manifest.value("format", "") != "concept-space")
        throw std::runtime_error(dir.string() + ": not a concept space");
    ConceptSpace s;
    s.method = extraction_method_from_string(manifest.at("method").get<std::string>());
    s.k = manifest.at("k").get<long>();
    s.p = manifest.at("p").get<long>();
    s.relu_codes = manifest.at("relu_codes").get<bool>();
    s.nonneg_codes = manifest.at("nonneg_codes").get<bool>();
    s.fit_meta.seed = manifest.at("seed").get<std::uint64_t>();
    s.fit_meta.iterations = manifest.at("iterations").get<int>();
    s.fit_meta.final_objective = manifest.at("final_objective").get<double>();
    s.fit_meta.converged = manifest.at("converged").get<bool>();
    const long fit_rows = manifest.at("fit_rows").get<long>();
    const long dict_rows = manifest.at("dict_rows").get<long>();
    s.encode_weights = read_matrix_f32(dir / "encode_weights.f32", s.p, s.k);
    s.encode_bias = read_matrix_f32(dir / "encode_bias.f32", 1, s.k).row(0).transpose();
    s.mean = read_matrix_f32(dir / "mean.f32", 1, s.p).row(0).transpose();
    s.decode_weights = read_matrix_f32(dir / "decode_weights.f32", s.k, s.p);
    s.decode_bias = read_matrix_f32(dir / "decode_bias.f32", 1, s.p).row(0).transpose();
    s.fit_codes = read_matrix_f32(dir / "fit_codes.f32", fit_rows, s.k);
    s.nmf_dictionary = read_matrix_f32(dir / "nmf_dictionary.f32", dict_rows,
                                       dict_rows > 0 ? s.p : 0);
    return s;
}

}  // namespace cbeval
