#include "mvr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mvr::eval {

using nlohmann::json;

EvalError::EvalError(Kind k, const std::string& message) : std::runtime_error(message), kind(k) {}

const std::vector<std::string>& marvl_languages() {
    static const std::vector<std::string> langs = {"id", "sw", "ta", "tr", "zh"};
    return langs;
}

std::map<std::string, LangCount> score(const std::vector<pipelines::Prediction>& predictions,
                                       const Dataset& dataset, bool strict) {
    std::map<std::string, const VisualReasoningExample*> by_id;
    for (const auto& ex : dataset.examples) by_id[ex.id] = &ex;

    std::map<std::string, LangCount> counts;
    std::set<std::string> seen;
    for (const auto& p : predictions) {
        auto it = by_id.find(p.example_id);
        if (it == by_id.end())
            throw EvalError(EvalError::Kind::UnknownExampleId,
                            "prediction for unknown example \"" + p.example_id + "\"");
        if (!seen.insert(p.example_id).second)
            throw EvalError(EvalError::Kind::DuplicatePrediction,
                            "duplicate prediction for \"" + p.example_id + "\"");
        const auto* ex = it->second;
        LangCount& c = counts[ex->language];
        c.n++;
        // Failed predictions count as incorrect, never dropped
        if (p.verdict && *p.verdict == ex->gold_label) c.correct++;
    }
    if (strict && seen.size() != dataset.examples.size())
        throw EvalError(EvalError::Kind::MissingPrediction,
                        "strict mode: " + std::to_string(dataset.examples.size() - seen.size()) +
                            " example(s) lack a prediction");
    return counts;
}

static void finish_report(EvalReport& r, std::optional<double> english_accuracy) {
    if (english_accuracy)
        r.english_accuracy = english_accuracy;
    else if (auto it = r.per_language.find("en"); it != r.per_language.end())
        r.english_accuracy = it->second.accuracy;

    double sum = 0;
    int present = 0;
    for (const auto& lang : marvl_languages()) {
        auto it = r.per_language.find(lang);
        if (it == r.per_language.end()) continue;
        sum += it->second.accuracy;
        ++present;
    }
    if (present > 0) {
        r.marvl_average = sum / present;
        if (r.english_accuracy) r.gap = *r.marvl_average - *r.english_accuracy;
    }
}

EvalReport aggregate(const std::map<std::string, LangCount>& per_language,
                     std::optional<double> english_accuracy) {
    EvalReport r;
    for (const auto& [lang, c] : per_language) {
        if (c.n == 0) continue;
        LangStat s;
        s.n = c.n;
        s.correct = c.correct;
        s.accuracy = 100.0 * c.correct / c.n;
        r.per_language[lang] = s;
    }
    finish_report(r, english_accuracy);
    return r;
}

EvalReport aggregate_accuracies(const std::map<std::string, double>& accuracies,
                                std::optional<double> english_accuracy) {
    EvalReport r;
    for (const auto& [lang, acc] : accuracies) {
        LangStat s;
        s.accuracy = acc;
        s.counts_known = false;
        r.per_language[lang] = s;
    }
    finish_report(r, english_accuracy);
    return r;
}

int word_count(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    int n = 0;
    while (in >> tok) ++n;
    return n;
}

std::vector<LengthBucket> length_analysis(const std::vector<pipelines::Prediction>& predictions,
                                          const Dataset& dataset, int bucket_width) {
    if (bucket_width < 1) bucket_width = 1;
    std::map<std::string, const VisualReasoningExample*> by_id;
    for (const auto& ex : dataset.examples) by_id[ex.id] = &ex;

    std::map<int, LangCount> buckets;  // bucket index -> counts
    for (const auto& p : predictions) {
        auto it = by_id.find(p.example_id);
        if (it == by_id.end())
            throw EvalError(EvalError::Kind::UnknownExampleId,
                            "prediction for unknown example \"" + p.example_id + "\"");
        const auto* ex = it->second;
        std::string english;
        if (ex->language == "en") {
            english = ex->statement;
        } else if (p.trace.contains("translated_statement")) {
            english = p.trace["translated_statement"].get<std::string>();
        } else {
            throw EvalError(EvalError::Kind::MissingTranslation,
                            "example \"" + ex->id + "\" lacks a stored English translation");
        }
        int words = word_count(english);
        int idx = words <= 0 ? 0 : (words - 1) / bucket_width;
        LangCount& c = buckets[idx];
        c.n++;
        if (p.verdict && *p.verdict == ex->gold_label) c.correct++;
    }

    std::vector<LengthBucket> out;
    for (const auto& [idx, c] : buckets) {
        LengthBucket b;
        b.lo = idx * bucket_width + 1;
        b.hi = (idx + 1) * bucket_width;
        b.n = c.n;
        b.accuracy = 100.0 * c.correct / c.n;
        out.push_back(b);
    }
    return out;
}

namespace {

std::string fmt1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    // avoid "-0.0"
    if (std::string(buf) == "-0.0") return "0.0";
    return buf;
}

std::vector<std::string> report_languages(const EvalReport& r) {
    std::vector<std::string> langs;
    if (r.per_language.count("en")) langs.push_back("en");
    for (const auto& l : marvl_languages())
        if (r.per_language.count(l)) langs.push_back(l);
    for (const auto& [l, _] : r.per_language)
        if (std::find(langs.begin(), langs.end(), l) == langs.end()) langs.push_back(l);
    return langs;
}

}  // namespace

std::string render_report(const EvalReport& r, ReportFormat format) {
    auto langs = report_languages(r);
    if (format == ReportFormat::Markdown) {
        std::string head = "| Strategy |";
        std::string rule = "| --- |";
        std::string row = "| " + (r.strategy.empty() ? std::string("-") : r.strategy) + " |";
        for (const auto& l : langs) {
            head += " " + l + " |";
            rule += " --- |";
            row += " " + fmt1(r.per_language.at(l).accuracy) + " |";
        }
        head += " MaRVL-Avg. | Avg. - EN |";
        rule += " --- | --- |";
        row += r.marvl_average ? " " + fmt1(*r.marvl_average) + " |" : " - |";
        row += r.gap ? " " + fmt1(*r.gap) + " |" : " - |";
        std::string out = head + "\n" + rule + "\n" + row + "\n";
        if (!r.length_table.empty()) {
            out += "\n| Words | n | Accuracy |\n| --- | --- | --- |\n";
            for (const auto& b : r.length_table)
                out += "| " + std::to_string(b.lo) + "-" + std::to_string(b.hi) + " | " +
                       std::to_string(b.n) + " | " + fmt1(b.accuracy) + " |\n";
        }
        return out;
    }
    if (format == ReportFormat::Csv) {
        std::string head = "strategy";
        std::string row = r.strategy;
        for (const auto& l : langs) {
            head += "," + l;
            row += "," + fmt1(r.per_language.at(l).accuracy);
        }
        head += ",marvl_avg,gap";
        row += r.marvl_average ? "," + fmt1(*r.marvl_average) : ",";
        row += r.gap ? "," + fmt1(*r.gap) : ",";
        std::string out = head + "\n" + row + "\n";
        if (!r.length_table.empty()) {
            out += "bucket_lo,bucket_hi,n,accuracy\n";
            for (const auto& b : r.length_table)
                out += std::to_string(b.lo) + "," + std::to_string(b.hi) + "," +
                       std::to_string(b.n) + "," + fmt1(b.accuracy) + "\n";
        }
        return out;
    }
    // JsonLines: one record per language, one summary record, one per bucket
    std::string out;
    for (const auto& l : langs) {
        const auto& s = r.per_language.at(l);
        json obj = {{"record", "language"},
                    {"language", l},
                    {"accuracy", fmt1(s.accuracy)}};
        if (s.counts_known) {
            obj["n"] = s.n;
            obj["correct"] = s.correct;
        }
        out += obj.dump() + "\n";
    }
    json summary = {{"record", "summary"}, {"strategy", r.strategy}};
    if (r.marvl_average) summary["marvl_avg"] = fmt1(*r.marvl_average);
    if (r.english_accuracy) summary["en"] = fmt1(*r.english_accuracy);
    if (r.gap) summary["gap"] = fmt1(*r.gap);
    out += summary.dump() + "\n";
    for (const auto& b : r.length_table) {
        json obj = {{"record", "bucket"}, {"lo", b.lo}, {"hi", b.hi}, {"n", b.n},
                    {"accuracy", fmt1(b.accuracy)}};
        out += obj.dump() + "\n";
    }
    return out;
}

}  // namespace mvr::eval
