#include "cbeval/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cbeval {

std::string compare_field(const SettingKey& key, CompareOn on) {
    switch (on) {
        case CompareOn::ExtractionMethod: return key.extraction_method;
        case CompareOn::InterpretationMethod: return key.interpretation_method;
        case CompareOn::PromptType: return key.prompt_type;
    }
    return {};
}

SettingKey strip_compare_field(SettingKey key, CompareOn on) {
    switch (on) {
        case CompareOn::ExtractionMethod: key.extraction_method.clear(); break;
        case CompareOn::InterpretationMethod: key.interpretation_method.clear(); break;
        case CompareOn::PromptType: key.prompt_type.clear(); break;
    }
    return key;
}

PairwiseMatrix copeland_matrix(const std::map<SettingKey, double>& results,
                               CompareOn compare_on, double alpha) {
    // group settings that differ only in the compared field
    std::map<SettingKey, std::map<std::string, double>> groups;
    std::set<std::string> method_set;
    for (const auto& [key, acc] : results) {
        groups[strip_compare_field(key, compare_on)][compare_field(key, compare_on)] = acc;
        method_set.insert(compare_field(key, compare_on));
    }
    if (method_set.size() < 2)
        throw std::invalid_argument("copeland_matrix: need at least 2 methods");

    PairwiseMatrix m;
    m.methods.assign(method_set.begin(), method_set.end());
    const long k = static_cast<long>(m.methods.size());
    std::map<std::string, long> index;
    for (long i = 0; i < k; ++i) index[m.methods[i]] = i;

    m.votes = Eigen::MatrixXi::Zero(k, k);
    m.matched = Eigen::MatrixXi::Zero(k, k);
    m.percent = Matrix::Zero(k, k);
    m.diff_mean = Matrix::Zero(k, k);
    m.diff_std = Matrix::Zero(k, k);
    m.significant.setConstant(k, k, false);

    std::vector<std::vector<std::vector<double>>> diffs(
        k, std::vector<std::vector<double>>(k));

    for (const auto& [_, by_method] : groups) {
        if (by_method.size() < method_set.size())
            m.dropped_settings += static_cast<long>(method_set.size() - by_method.size());
        for (auto a = by_method.begin(); a != by_method.end(); ++a) {
            for (auto b = std::next(a); b != by_method.end(); ++b) {
                const long i = index[a->first], j = index[b->first];
                const double ai = a->second, aj = b->second;
                if (ai > aj) {
                    m.votes(i, j) += 2;
                } else if (ai < aj) {
                    m.votes(j, i) += 2;
                } else {
                    m.votes(i, j) += 1;
                    m.votes(j, i) += 1;
                }
                m.matched(i, j) += 1;
                m.matched(j, i) += 1;
                diffs[i][j].push_back(ai - aj);
                diffs[j][i].push_back(aj - ai);
            }
        }
    }

    for (long i = 0; i < k; ++i) {
        for (long j = 0; j < k; ++j) {
            if (i == j || m.matched(i, j) == 0) continue;
            m.percent(i, j) =
                100.0 * m.votes(i, j) / (2.0 * m.matched(i, j));
            const auto& d = diffs[i][j];
            const double mean =
                std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
            m.diff_mean(i, j) = mean;
            if (d.size() >= 2) {
                double ss = 0.0;
                for (double v : d) ss += (v - mean) * (v - mean);
                m.diff_std(i, j) = std::sqrt(ss / (d.size() - 1));
                const TTestResult t = paired_t_test(d, alpha);
                m.significant(i, j) = t.significant;
            }
        }
    }
    return m;
}

Ranking copeland_rank(const PairwiseMatrix& matrix) {
    Ranking r;
    r.methods = matrix.methods;
    const long k = static_cast<long>(matrix.methods.size());
    r.ranks.resize(k);
    for (long i = 0; i < k; ++i) {
        int wins = 1;  // the self comparison is a tie, always >= 50
        for (long j = 0; j < k; ++j) {
            if (j == i || matrix.matched(i, j) == 0) continue;
            if (matrix.percent(i, j) >= 50.0) ++wins;
        }
        r.ranks[i] = static_cast<int>(k) + 1 - wins;
    }
    return r;
}

std::string pairwise_matrix_to_csv(const PairwiseMatrix& m) {
    std::ostringstream os;
    os << "method_i,method_j,votes,percent,diff_mean,diff_std,significant,matched\n";
    const long k = static_cast<long>(m.methods.size());
    for (long i = 0; i < k; ++i) {
        for (long j = 0; j < k; ++j) {
            if (i == j) continue;
            os << m.methods[i] << ',' << m.methods[j] << ',' << m.votes(i, j) << ','
               << m.percent(i, j) << ',' << m.diff_mean(i, j) << ',' << m.diff_std(i, j)
               << ',' << (m.significant(i, j) ? 1 : 0) << ',' << m.matched(i, j) << '\n';
        }
    }
    return os.str();
}

std::string ranking_to_csv(const Ranking& r) {
    // rows sorted by rank, then name, for a stable table
    std::vector<std::size_t> order(r.methods.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (r.ranks[a] != r.ranks[b]) return r.ranks[a] < r.ranks[b];
        return r.methods[a] < r.methods[b];
    });
    std::ostringstream os;
    os << "method,rank\n";
    for (std::size_t i : order) os << r.methods[i] << ',' << r.ranks[i] << '\n';
    return os.str();
}

}  // namespace cbeval
