#include "mvr/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mvr {

using nlohmann::json;

DatasetError::DatasetError(Kind k, int ln, const std::string& message)
    : std::runtime_error(ln > 0 ? "line " + std::to_string(ln) + ": " + message : message),
      kind(k),
      line(ln) {}

const VisualReasoningExample* Dataset::find(const std::string& id) const {
    auto it = std::find_if(examples.begin(), examples.end(),
                           [&](const VisualReasoningExample& e) { return e.id == id; });
    return it == examples.end() ? nullptr : &*it;
}

const std::set<std::string>& default_languages() {
    static const std::set<std::string> langs = {"en", "id", "sw", "ta", "tr", "zh"};
    return langs;
}

static std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool normalize_label(const std::string& raw) {
    std::string v = lower(trim(raw));
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw DatasetError(DatasetError::Kind::BadLabel, 0, "unrecognized label \"" + raw + "\"");
}

static std::string require_string(const json& obj, const char* field, int line) {
    if (!obj.contains(field))
        throw DatasetError(DatasetError::Kind::MissingField, line,
                           std::string("missing field \"") + field + "\"");
    const json& v = obj.at(field);
    if (!v.is_string())
        throw DatasetError(DatasetError::Kind::BadField, line,
                           std::string("field \"") + field + "\" must be a string");
    return v.get<std::string>();
}

static VisualReasoningExample parse_line(const std::string& line_text, int line,
                                         const std::set<std::string>& allowed_languages) {
    json obj;
    try {
        obj = json::parse(line_text);
    } catch (const json::parse_error& e) {
        throw DatasetError(DatasetError::Kind::Parse, line, e.what());
    }
    if (!obj.is_object())
        throw DatasetError(DatasetError::Kind::Parse, line, "record is not an object");

    VisualReasoningExample ex;
    ex.id = require_string(obj, "id", line);
    if (ex.id.empty()) throw DatasetError(DatasetError::Kind::BadField, line, "empty id");
    ex.statement = require_string(obj, "statement", line);
    if (trim(ex.statement).empty())
        throw DatasetError(DatasetError::Kind::BadField, line, "empty statement");
    ex.language = require_string(obj, "language", line);
    if (!allowed_languages.count(ex.language))
        throw DatasetError(DatasetError::Kind::BadField, line,
                           "unknown language \"" + ex.language + "\"");
    ex.left_image = require_string(obj, "left_image", line);
    ex.right_image = require_string(obj, "right_image", line);
    if (ex.left_image.empty() || ex.right_image.empty())
        throw DatasetError(DatasetError::Kind::BadField, line, "empty image reference");

    if (!obj.contains("label"))
        throw DatasetError(DatasetError::Kind::MissingField, line, "missing field \"label\"");
    const json& label = obj.at("label");
    try {
        if (label.is_boolean())
            ex.gold_label = label.get<bool>();
        else if (label.is_number_integer())
            ex.gold_label = normalize_label(std::to_string(label.get<long long>()));
        else if (label.is_string())
            ex.gold_label = normalize_label(label.get<std::string>());
        else
            throw DatasetError(DatasetError::Kind::BadLabel, line, "label has unsupported type");
    } catch (const DatasetError& e) {
        throw DatasetError(e.kind, line, e.what());
    }
    return ex;
}

Dataset parse_dataset(const std::string& text, const std::string& source_path,
                      const std::optional<std::string>& expected_language,
                      const std::set<std::string>& allowed_languages) {
    Dataset ds;
    ds.source_path = source_path;
    std::set<std::string> seen_ids;
    std::istringstream in(text);
    std::string line_text;
    int line = 0;
    while (std::getline(in, line_text)) {
        ++line;
        if (trim(line_text).empty()) continue;
        VisualReasoningExample ex = parse_line(line_text, line, allowed_languages);
        if (!seen_ids.insert(ex.id).second)
            throw DatasetError(DatasetError::Kind::DuplicateId, line,
                               "duplicate id \"" + ex.id + "\"");
        if (expected_language && ex.language != *expected_language)
            throw DatasetError(DatasetError::Kind::LanguageMismatch, line,
                               "expected language " + *expected_language + ", got " + ex.language);
        ds.language_histogram[ex.language]++;
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

Dataset load_dataset(const std::string& path, const std::optional<std::string>& expected_language,
                     const std::set<std::string>& allowed_languages) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError(DatasetError::Kind::Io, 0, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str(), path, expected_language, allowed_languages);
}

std::string serialize_dataset(const Dataset& d) {
    std::string out;
    for (const auto& ex : d.examples) {
        json obj;
        obj["id"] = ex.id;
        obj["statement"] = ex.statement;
        obj["language"] = ex.language;
        obj["left_image"] = ex.left_image;
        obj["right_image"] = ex.right_image;
        obj["label"] = ex.gold_label ? "true" : "false";
        out += obj.dump();
        out += '\n';
    }
    return out;
}

}  // namespace mvr
