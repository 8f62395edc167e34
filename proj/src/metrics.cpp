#include "cbeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cbeval {

namespace {

int argmax_row(const Eigen::RowVectorXd& row) {
    int best = 0;
    for (int j = 1; j < row.size(); ++j)
        if (row(j) > row(best)) best = j;
    return best;
}

Vector softmax_row(const Eigen::RowVectorXd& row) {
    const double m = row.maxCoeff();
    Vector e = (row.array() - m).exp();
    return e / e.sum();
}

}  // namespace

MetricVector complexity_metrics(const ConceptSpace& space, const Matrix& codes,
                                const ImportanceReport& report,
                                const MetricOptions& opt) {
    MetricVector m;
    const long k = space.k;
    m.nb_concepts = static_cast<double>(k);

    // L0: mean nonzero count per sample
    double total = 0.0;
    for (long i = 0; i < codes.rows(); ++i)
        total += (codes.row(i).cwiseAbs().array() > opt.nonzero_threshold).count();
    m.nb_activated = total / static_cast<double>(codes.rows());
    m.ratio_activated = m.nb_activated / static_cast<double>(k);

    // mean pairwise cosine over decoder rows; the double sum includes i == j
    const Matrix& dec = space.decoder_matrix();
    Vector norms(k);
    for (long i = 0; i < k; ++i) norms(i) = dec.row(i).norm();
    double cos_sum = 0.0;
    for (long i = 0; i < k; ++i) {
        for (long j = 0; j < k; ++j) {
            const double denom = norms(i) * norms(j);
            if (denom > 0.0) cos_sum += dec.row(i).dot(dec.row(j)) / denom;
        }
    }
    m.cosine_similarity = cos_sum / static_cast<double>(k * k);

    // mean entry of the code covariance matrix
    const Eigen::RowVectorXd mu = codes.colwise().mean();
    const Matrix centered = codes.rowwise() - mu;
    const Matrix cov = centered.transpose() * centered / static_cast<double>(codes.rows());
    m.covariance = cov.mean();

    // union over classes of concepts with normalized global importance above
    // the threshold
    std::vector<bool> important(static_cast<std::size_t>(k), false);
    for (long c = 0; c < report.global_norm.rows(); ++c)
        for (long j = 0; j < k; ++j)
            if (report.global_norm(c, j) > opt.important_threshold) important[j] = true;
    m.nb_important = static_cast<double>(
        std::count(important.begin(), important.end(), true));
    m.ratio_important = m.nb_important / static_cast<double>(k);
    return m;
}

MetricVector faithfulness_metrics(const ConceptSpace& space,
                                  const ActivationBundle& bundle, const Matrix& codes) {
    MetricVector m;
    const long n = bundle.n();

    const Matrix recon = decode(space, codes);
    m.latents_l2 = (bundle.activations - recon).rowwise().squaredNorm().mean();

    const Matrix z_f = bundle.logits();
    const Matrix z_c = (recon * bundle.head_weights).rowwise() + bundle.head_bias.transpose();
    m.logits_l2 = (z_f - z_c).rowwise().squaredNorm().mean();

    double kl = 0.0;
    for (long i = 0; i < n; ++i) {
        const Vector p = softmax_row(z_f.row(i));
        const Vector q = softmax_row(z_c.row(i));
        for (long c = 0; c < p.size(); ++c) kl += p(c) * std::log(p(c) / q(c));
    }
    m.logits_kl = kl / static_cast<double>(n);

    // completeness against the 1/|Y| random baseline
    const double a_r = 1.0 / static_cast<double>(bundle.num_classes());
    long correct_f = 0, correct_c = 0;
    for (long i = 0; i < n; ++i) {
        if (bundle.predictions[i] == bundle.labels[i]) ++correct_f;
        if (argmax_row(z_c.row(i)) == bundle.labels[i]) ++correct_c;
    }
    const double acc_f = static_cast<double>(correct_f) / n;
    const double acc_c = static_cast<double>(correct_c) / n;
    if (acc_f != a_r) m.completeness = (acc_c - a_r) / (acc_f - a_r);
    return m;
}

MetricVector all_metrics(const ConceptSpace& space, const ActivationBundle& bundle,
                         const Matrix& codes, const ImportanceReport& report,
                         const MetricOptions& opt) {
    MetricVector c = complexity_metrics(space, codes, report, opt);
    const MetricVector f = faithfulness_metrics(space, bundle, codes);
    c.latents_l2 = f.latents_l2;
    c.logits_l2 = f.logits_l2;
    c.logits_kl = f.logits_kl;
    c.completeness = f.completeness;
    return c;
}

std::string metrics_csv_header() {
    return "setting,nb_concepts,nb_activated,ratio_activated,cosine_similarity,"
           "covariance,nb_important,ratio_important,latents_l2,logits_l2,logits_kl,"
           "completeness\n";
}

std::string metrics_to_csv_row(const SettingKey& key, const MetricVector& m) {
    std::ostringstream os;
    os << key.to_string() << ',' << m.nb_concepts << ',' << m.nb_activated << ','
       << m.ratio_activated << ',' << m.cosine_similarity << ',' << m.covariance << ','
       << m.nb_important << ',' << m.ratio_important << ',' << m.latents_l2 << ','
       << m.logits_l2 << ',' << m.logits_kl << ',';
    if (m.completeness)
        os << *m.completeness;
    else
        os << "undefined";
    os << '\n';
    return os.str();
}

}  // namespace cbeval
