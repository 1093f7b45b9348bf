#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvr {

// One benchmark record: a statement about a pair of images plus a gold
// true/false label.
struct VisualReasoningExample {
    std::string id;
    std::string statement;
    std::string language;   // lowercase two-letter code
    std::string left_image;  // opaque reference, resolved at backend-call time
    std::string right_image;
    bool gold_label = false;

    bool operator==(const VisualReasoningExample&) const = default;
};

class DatasetError : public std::runtime_error {
public:
    enum class Kind {
        Io,
        Parse,
        MissingField,
        BadField,
        BadLabel,
        DuplicateId,
        LanguageMismatch,
    };

    DatasetError(Kind kind, int line, const std::string& message);

    Kind kind;
    int line;  // 1-based line number, 0 when not line-specific
};

struct Dataset {
    std::vector<VisualReasoningExample> examples;  // file order
    std::string source_path;
    std::map<std::string, int> language_histogram;

    const VisualReasoningExample* find(const std::string& id) const;
};

const std::set<std::string>& default_languages();  // en id sw ta tr zh

// "true"/"1" -> true, "false"/"0" -> false, case-insensitive.
bool normalize_label(const std::string& raw);

Dataset load_dataset(const std::string& path,
                     const std::optional<std::string>& expected_language = {},
                     const std::set<std::string>& allowed_languages = default_languages());

Dataset parse_dataset(const std::string& text, const std::string& source_path,
                      const std::optional<std::string>& expected_language = {},
                      const std::set<std::string>& allowed_languages = default_languages());

// Canonical line-delimited form; parse_dataset(serialize_dataset(d)) == d.
std::string serialize_dataset(const Dataset& d);

}  // namespace mvr
