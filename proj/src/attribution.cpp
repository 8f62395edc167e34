#include "cbeval/attribution.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace cbeval {

using nlohmann::json;

namespace {

int argmax_row(const Eigen::RowVectorXd& row) {
    int best = 0;
    for (int j = 1; j < row.size(); ++j)
        if (row(j) > row(best)) best = j;
    return best;
}

}  // namespace

Matrix local_importance(const ConceptSpace& space, const ActivationBundle& bundle,
                        const Matrix& codes) {
    if (codes.cols() != space.k)
        throw std::invalid_argument("local_importance: code width does not match k");
    if (codes.rows() != bundle.n())
        throw std::invalid_argument("local_importance: code rows do not match bundle");

    // gradient of class-c logit wrt codes: decoder * head column c
    const Matrix grads = space.decoder_matrix() * bundle.head_weights;  // k x |Y|
    const Matrix z = concept_logits(space, bundle, codes);

    Matrix phi(codes.rows(), codes.cols());
    for (long i = 0; i < codes.rows(); ++i) {
        const int c = argmax_row(z.row(i));
        phi.row(i) = codes.row(i).cwiseProduct(grads.col(c).transpose());
    }
    return phi;
}

Matrix global_importance(const Matrix& local, const std::vector<int>& predictions,
                         int classes) {
    if (local.rows() != static_cast<long>(predictions.size()))
        throw std::invalid_argument("global_importance: predictions length mismatch");
    if (local.rows() < 1)
        throw std::invalid_argument("global_importance: need at least one sample");

    Matrix global = Matrix::Zero(classes, local.cols());
    std::vector<long> counts(classes, 0);
    for (long i = 0; i < local.rows(); ++i) {
        const int c = predictions[i];
        if (c < 0 || c >= classes)
            throw std::invalid_argument("global_importance: prediction out of range");
        global.row(c) += local.row(i);
        ++counts[c];
    }
    for (int c = 0; c < classes; ++c)
        if (counts[c] > 0) global.row(c) /= static_cast<double>(counts[c]);
    return global;
}

Matrix normalize_importance(const Matrix& rows) {
    Matrix out = rows;
    for (long i = 0; i < out.rows(); ++i) {
        const double l1 = out.row(i).cwiseAbs().sum();
        if (l1 > 0.0) out.row(i) /= l1;
    }
    return out;
}

std::optional<std::string> bucket_encode(double value, const AttributionOptions& opt) {
    if (value < -1.0 || value > 1.0)
        throw std::domain_error("bucket_encode: value outside [-1, 1]");
    const double t = opt.bucket_threshold;
    if (value <= -0.3) return "- -";
    if (value <= -t) return "-";
    if (value < t) return std::nullopt;
    if (value < 0.3) return "+";
    return "+ +";
}

ImportanceReport build_importance_report(const ConceptSpace& space,
                                         const ActivationBundle& bundle,
                                         const Matrix& codes,
                                         const AttributionOptions& opt) {
    ImportanceReport r;
    r.local = local_importance(space, bundle, codes);

    const Matrix z = concept_logits(space, bundle, codes);
    r.bottleneck_predictions.resize(z.rows());
    for (long i = 0; i < z.rows(); ++i) {
        r.bottleneck_predictions[i] = argmax_row(z.row(i));
        if (r.bottleneck_predictions[i] != bundle.predictions[i]) ++r.disagreement_count;
    }

    const int classes = static_cast<int>(bundle.num_classes());
    r.global_per_class = global_importance(r.local, r.bottleneck_predictions, classes);

    std::vector<long> counts(classes, 0);
    for (int c : r.bottleneck_predictions) ++counts[c];
    for (int c = 0; c < classes; ++c)
        if (counts[c] == 0) r.empty_classes.push_back(c);

    r.local_norm = normalize_importance(r.local);
    r.global_norm = normalize_importance(r.global_per_class);

    for (long j = 0; j < r.global_norm.cols(); ++j) {
        for (long c = 0; c < r.global_norm.rows(); ++c) {
            if (std::abs(r.global_norm(c, j)) > opt.shown_threshold) {
                r.shown_concepts.push_back(static_cast<int>(j));
                break;
            }
        }
    }
    return r;
}

std::string importance_report_to_json(const ImportanceReport& report) {
    auto matrix_to_json = [](const Matrix& m) {
        json rows = json::array();
        for (long i = 0; i < m.rows(); ++i) {
            json row = json::array();
            for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
            rows.push_back(row);
        }
        return rows;
    };
    json out;
    out["local"] = matrix_to_json(report.local);
    out["global_per_class"] = matrix_to_json(report.global_per_class);
    out["local_norm"] = matrix_to_json(report.local_norm);
    out["global_norm"] = matrix_to_json(report.global_norm);
    out["shown_concepts"] = report.shown_concepts;
    out["disagreement_count"] = report.disagreement_count;
    out["empty_classes"] = report.empty_classes;
    return out.dump(2);
}

}  // namespace cbeval
