#pragma once

#include "cbeval/corpus.hpp"
#include "cbeval/stats.hpp"

#include <map>
#include <string>
#include <vector>

namespace cbeval {

// Which SettingKey field to treat as the compared "method"; every other field
// must match for two settings to cast a vote against each other.
enum class CompareOn { ExtractionMethod, InterpretationMethod, PromptType };

std::string compare_field(const SettingKey& key, CompareOn on);
SettingKey strip_compare_field(SettingKey key, CompareOn on);

struct PairwiseMatrix {
    std::vector<std::string> methods;
    Eigen::MatrixXi votes;       // Copeland 0/1/2 accumulations
    Matrix percent;              // votes normalized to [0, 100]; diagonal 0
    Matrix diff_mean;            // mean per-setting accuracy differences
    Matrix diff_std;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> significant;
    Eigen::MatrixXi matched;     // settings compared per pair
    long dropped_settings = 0;   // settings with no counterpart on some pair
};

struct Ranking {
    std::vector<std::string> methods;
    std::vector<int> ranks;  // aligned with methods; ties share a rank
};

// Builds the pairwise 0/1/2 vote matrix, win percentages, mean accuracy
// differences and paired-t significance over all matched setting pairs.
PairwiseMatrix copeland_matrix(const std::map<SettingKey, double>& results,
                               CompareOn compare_on, double alpha = 0.05);

// rank(i) = |M| + 1 - #{ j : percent[i,j] >= 50 }, with the self comparison
// counting as a tie.
Ranking copeland_rank(const PairwiseMatrix& matrix);

std::string pairwise_matrix_to_csv(const PairwiseMatrix& m);
std::string ranking_to_csv(const Ranking& r);

}  // namespace cbeval
