#include "cbeval/concepts.hpp"
#include "cbeval/corpus.hpp"
#include "cbeval/rng.hpp"

#include <doctest.h>

#include <chrono>
#include <filesystem>

using namespace cbeval;
namespace fs = std::filesystem;

namespace {

ActivationBundle make_bundle(long n, long p, std::uint64_t seed, bool nonneg,
                             double noise = 0.05) {
    SyntheticOptions opt;
    opt.n = n;
    opt.p = p;
    opt.k_true = static_cast<int>(std::min<long>(8, p / 2));
    opt.seed = seed;
    opt.nonneg = nonneg;
    opt.noise_level = noise;
    return generate_synthetic_bundle(opt).bundle;
}

double relative_reconstruction_error(const ConceptSpace& s, const Matrix& acts) {
    const Matrix recon = decode(s, encode(s, acts));
    return (recon - acts).norm() / acts.norm();
}

}  // namespace

TEST_CASE("PCA, SVD, ICA at k=p reconstruct exactly; NoProjection is the identity") {
    const ActivationBundle bundle = make_bundle(500, 64, 11, false);
    const auto start = std::chrono::steady_clock::now();

    for (auto method : {ExtractionMethod::PCA, ExtractionMethod::SVD,
                        ExtractionMethod::ICA}) {
        const ConceptSpace s = fit_concept_space(bundle, method, 64, 0);
        CHECK(relative_reconstruction_error(s, bundle.activations) <= 1e-6);
    }

    const ConceptSpace np = fit_concept_space(bundle, ExtractionMethod::NoProjection,
                                              /*k ignored*/ 5, 0);
    CHECK(np.k == 64);
    CHECK(encode(np, bundle.activations) == bundle.activations);
    CHECK(relative_reconstruction_error(np, bundle.activations) == 0.0);

    const double seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    CHECK(seconds < 10.0);
}

TEST_CASE("truncated PCA/SVD reduce error monotonically with k") {
    const ActivationBundle bundle = make_bundle(120, 16, 2, false);
    for (auto method : {ExtractionMethod::PCA, ExtractionMethod::SVD}) {
        double prev = 1e9;
        for (long k : {2, 4, 8, 16}) {
            const ConceptSpace s = fit_concept_space(bundle, method, k, 0);
            const double err = relative_reconstruction_error(s, bundle.activations);
            CHECK(err <= prev + 1e-12);
            prev = err;
        }
    }
}

TEST_CASE("SVD fits are deterministic with a fixed sign convention") {
    const ActivationBundle bundle = make_bundle(80, 12, 5, false);
    const ConceptSpace a = fit_concept_space(bundle, ExtractionMethod::SVD, 6, 0);
    const ConceptSpace b = fit_concept_space(bundle, ExtractionMethod::SVD, 6, 0);
    CHECK(a.encode_weights == b.encode_weights);
    // every basis column's largest-magnitude entry is positive
    for (long j = 0; j < a.encode_weights.cols(); ++j) {
        long idx;
        a.encode_weights.col(j).cwiseAbs().maxCoeff(&idx);
        CHECK(a.encode_weights(idx, j) > 0.0);
    }
}

TEST_CASE("PCA codes are centered") {
    const ActivationBundle bundle = make_bundle(100, 10, 9, false);
    const ConceptSpace s = fit_concept_space(bundle, ExtractionMethod::PCA, 4, 0);
    CHECK(s.fit_codes.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ICA codes are whitened and the decoder inverts the encoder") {
    const ActivationBundle bundle = make_bundle(300, 16, 13, false);
    const ConceptSpace s = fit_concept_space(bundle, ExtractionMethod::ICA, 6, 1);
    const Matrix& u = s.fit_codes;
    const Matrix cov = u.transpose() * u / static_cast<double>(u.rows());
    CHECK((cov - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-6);
    // decode of the fitted codes lands on the rank-6 approximation of the data;
    // encoding that approximation again must be a fixed point
    const Matrix recon = decode(s, u);
    CHECK((encode(s, recon) - u).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("NMF objective is monotone and factors stay nonnegative over 20 seeds") {
    const ActivationBundle bundle = make_bundle(200, 32, 21, true);
    FitOptions opt;
    opt.nmf_max_iterations = 400;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ConceptSpace s =
            fit_concept_space(bundle, ExtractionMethod::NMF, 6, seed, opt);
        REQUIRE(s.fit_meta.objective_history.size() >= 2);
        for (std::size_t i = 1; i < s.fit_meta.objective_history.size(); ++i)
            CHECK(s.fit_meta.objective_history[i] <=
                  s.fit_meta.objective_history[i - 1] + 1e-10);
        CHECK(s.fit_codes.minCoeff() >= 0.0);
        CHECK(s.nmf_dictionary.minCoeff() >= 0.0);
        CHECK(s.fit_meta.final_objective ==
              doctest::Approx(s.fit_meta.objective_history.back()));
    }
}

TEST_CASE("NMF beats random factorizations of the same shape") {
    const ActivationBundle bundle = make_bundle(80, 12, 3, true);
    const ConceptSpace s = fit_concept_space(bundle, ExtractionMethod::NMF, 4, 0);
    Rng rng(77);
    const double scale = std::sqrt(bundle.activations.mean() / 4.0);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix u(80, 4), w(4, 12);
        for (long i = 0; i < u.size(); ++i) u(i) = rng.uniform() * 2.0 * scale;
        for (long i = 0; i < w.size(); ++i) w(i) = rng.uniform() * 2.0 * scale;
        CHECK(s.fit_meta.final_objective <= (bundle.activations - u * w).norm());
    }
}

TEST_CASE("NMF out-of-sample encode matches the training solution") {
    const ActivationBundle bundle = make_bundle(100, 12, 4, true);
    const ConceptSpace s = fit_concept_space(bundle, ExtractionMethod::NMF, 4, 0);
    // re-encoding the training data must reach (at least) the training objective
    const Matrix codes = encode(s, bundle.activations);
    CHECK(codes.minCoeff() >= 0.0);
    const double refit = (bundle.activations - codes * s.nmf_dictionary).norm();
    CHECK(refit <= s.fit_meta.final_objective * (1.0 + 1e-4));
}

TEST_CASE("NMF rejects signed inputs; linear methods reject k > p") {
    const ActivationBundle signed_bundle = make_bundle(40, 8, 6, false);
    CHECK_THROWS_WITH_AS(
        fit_concept_space(signed_bundle, ExtractionMethod::NMF, 4, 0),
        doctest::Contains("nonnegative"), std::invalid_argument);

    const ActivationBundle bundle = make_bundle(40, 8, 6, true);
    for (auto method : {ExtractionMethod::PCA, ExtractionMethod::SVD,
                        ExtractionMethod::ICA})
        CHECK_THROWS_AS(fit_concept_space(bundle, method, 9, 0), std::invalid_argument);
    CHECK_THROWS_AS(fit_concept_space(bundle, ExtractionMethod::PCA, 0, 0),
                    std::invalid_argument);
}

TEST_CASE("SAE training is deterministic and produces the advertised structure") {
    const ActivationBundle bundle = make_bundle(120, 12, 8, true);
    FitOptions opt;
    opt.sae_steps = 800;
    const ConceptSpace a = fit_concept_space(bundle, ExtractionMethod::SAE, 8, 3, opt);
    const ConceptSpace b = fit_concept_space(bundle, ExtractionMethod::SAE, 8, 3, opt);
    CHECK(a.encode_weights == b.encode_weights);
    CHECK(a.decode_weights == b.decode_weights);

    for (long j = 0; j < a.decode_weights.rows(); ++j)
        CHECK(a.decode_weights.row(j).norm() == doctest::Approx(1.0));
    const Matrix codes = encode(a, bundle.activations);
    CHECK(codes.minCoeff() >= 0.0);
    REQUIRE(a.fit_meta.objective_history.size() >= 2);
    CHECK(a.fit_meta.objective_history.back() < a.fit_meta.objective_history.front());
}

TEST_CASE("concept spaces round-trip through the directory format") {
    const ActivationBundle bundle = make_bundle(60, 10, 14, true);
    const fs::path dir = fs::temp_directory_path() / "cbeval_test_space";
    for (auto method : {ExtractionMethod::PCA, ExtractionMethod::NMF,
                        ExtractionMethod::NoProjection}) {
        const ConceptSpace s = fit_concept_space(bundle, method, 4, 0);
        fs::remove_all(dir);
        write_concept_space(s, dir);
        const ConceptSpace r = read_concept_space(dir);
        CHECK(r.method == s.method);
        CHECK(r.k == s.k);
        CHECK(r.p == s.p);
        CHECK(r.relu_codes == s.relu_codes);
        CHECK(r.nonneg_codes == s.nonneg_codes);
        CHECK(r.decode_weights.rows() == s.decode_weights.rows());
        // f32 persistence: compare after casting
        for (long i = 0; i < s.decode_weights.rows(); ++i)
            for (long j = 0; j < s.decode_weights.cols(); ++j)
                CHECK(static_cast<float>(r.decode_weights(i, j)) ==
                      static_cast<float>(s.decode_weights(i, j)));
    }
    fs::remove_all(dir);
}

TEST_CASE("method names round-trip") {
    for (auto m : {ExtractionMethod::NoProjection, ExtractionMethod::PCA,
                   ExtractionMethod::SVD, ExtractionMethod::ICA, ExtractionMethod::NMF,
                   ExtractionMethod::SAE})
        CHECK(extraction_method_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(extraction_method_from_string("PLS"), std::invalid_argument);
}
