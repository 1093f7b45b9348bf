#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvr/dataset.hpp"
#include "mvr/pipelines.hpp"

namespace mvr::eval {

class EvalError : public std::runtime_error {
public:
    enum class Kind { UnknownExampleId, DuplicatePrediction, MissingPrediction, MissingTranslation };

    EvalError(Kind kind, const std::string& message);

    Kind kind;
};

struct LangCount {
    int n = 0;
    int correct = 0;
};

struct LangStat {
    int n = 0;
    int correct = 0;
    double accuracy = 0.0;  // percent, unrounded
    bool counts_known = true;
};

struct LengthBucket {
    int lo = 0;  // word-count range [lo, hi], inclusive
    int hi = 0;
    int n = 0;
    double accuracy = 0.0;
};

struct EvalReport {
    std::string strategy;
    std::map<std::string, LangStat> per_language;
    std::optional<double> english_accuracy;
    std::optional<double> marvl_average;  // unweighted mean over present MaRVL languages
    std::optional<double> gap;            // marvl_average - english_accuracy
    std::vector<LengthBucket> length_table;
};

const std::vector<std::string>& marvl_languages();  // id sw ta tr zh

// Failed verdicts count as incorrect. Strict mode additionally requires a
// prediction for every dataset example.
std::map<std::string, LangCount> score(const std::vector<pipelines::Prediction>& predictions,
                                       const Dataset& dataset, bool strict = false);

EvalReport aggregate(const std::map<std::string, LangCount>& per_language,
                     std::optional<double> english_accuracy = {});

// Same arithmetic over already-computed per-language accuracies (percent);
// used to reproduce published table rows where raw counts are unavailable.
EvalReport aggregate_accuracies(const std::map<std::string, double>& accuracies,
                                std::optional<double> english_accuracy = {});

// Word count = whitespace-split tokens of the English statement (the stored
// translation for non-en examples). Buckets of bucket_width words; empty
// buckets omitted.
std::vector<LengthBucket> length_analysis(const std::vector<pipelines::Prediction>& predictions,
                                          const Dataset& dataset, int bucket_width);

int word_count(const std::string& text);

enum class ReportFormat { Markdown, Csv, JsonLines };

// Numbers rendered to exactly 1 decimal in every format.
std::string render_report(const EvalReport& report, ReportFormat format);

}  // namespace mvr::eval
