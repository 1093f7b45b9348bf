#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvr/clients.hpp"
#include "mvr/dataset.hpp"

namespace mvr::pipelines {

enum class Strategy { EndToEnd, TranslateTest, VisProg, CaptionReason };

std::string strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(const std::string& name);

class TemplateError : public std::runtime_error {
public:
    explicit TemplateError(const std::string& message);
};

// UTF-8 text with {placeholder} syntax. Rendering fails on an unbound
// required placeholder and on any placeholder left unfilled.
struct PromptTemplate {
    std::string name;
    std::string body;
    std::set<std::string> required_placeholders;

    static PromptTemplate from_file(const std::string& path, const std::string& name,
                                    std::set<std::string> required);

    std::string render(const std::map<std::string, std::string>& vars) const;
};

struct Templates {
    PromptTemplate end_to_end;
    PromptTemplate codegen;
    PromptTemplate instructions;
    PromptTemplate caption;
    PromptTemplate reasoning;

    static Templates defaults();
    static Templates from_dir(const std::string& dir);
};

// The DSL grammar shipped inside the program-generation prompt.
const std::string& dsl_grammar_ebnf();

struct Prediction {
    std::string example_id;
    std::optional<bool> verdict;     // empty when failed
    std::string failed_reason;       // machine-readable, empty when ok
    Strategy strategy = Strategy::EndToEnd;
    nlohmann::json trace = nlohmann::json::object();

    bool failed() const { return !verdict.has_value(); }
};

std::string predictions_to_jsonl(const std::vector<Prediction>& preds);
std::vector<Prediction> predictions_from_jsonl(const std::string& text);

// Strips a ``` fence (with optional language tag) wrapping generated program
// text; returns the input unchanged when no fence is present.
std::string strip_code_fences(const std::string& text);

// Pipeline entry points. These never throw: every failure mode becomes a
// Failed prediction carrying the stage and reason.
Prediction run_end_to_end(const VisualReasoningExample& ex, clients::ChatBackend& vision,
                          const PromptTemplate& tmpl);

Prediction run_translate_test(const VisualReasoningExample& ex, clients::Translator& translator,
                              clients::ChatBackend& vision, const PromptTemplate& tmpl);

Prediction run_visprog(const VisualReasoningExample& ex, clients::Translator& translator,
                       clients::ChatBackend& codegen, clients::ChatBackend& vqa,
                       const PromptTemplate& codegen_tmpl);

class MalformedInstructionReply : public std::runtime_error {
public:
    explicit MalformedInstructionReply(const std::string& message);
};

// Parses a two-line "LEFT: ..." / "RIGHT: ..." reply into per-image
// captioning directives.
std::pair<std::string, std::string> generate_targeted_instructions(
    const std::string& statement_en, clients::ChatBackend& text_backend,
    const PromptTemplate& tmpl);

Prediction run_caption_reason(const VisualReasoningExample& ex, clients::Translator& translator,
                              clients::ChatBackend& instruction_backend,
                              clients::ChatBackend& caption_backend,
                              clients::ChatBackend& reasoning_backend, const Templates& templates);

// Message builders shared with fixture generation; fingerprints of scripted
// runs depend on these exact shapes.
std::vector<clients::Message> end_to_end_messages(const VisualReasoningExample& ex,
                                                  const std::string& statement,
                                                  const PromptTemplate& tmpl);
std::vector<clients::Message> vqa_messages(const std::string& image_ref,
                                           const std::string& question);
std::vector<clients::Message> caption_messages(const std::string& image_ref,
                                               const std::string& instruction,
                                               const PromptTemplate& tmpl);

struct StrategyBackends {
    clients::Translator* translator = nullptr;
    clients::ChatBackend* vision = nullptr;
    clients::ChatBackend* codegen = nullptr;
    clients::ChatBackend* vqa = nullptr;
    clients::ChatBackend* instruction = nullptr;
    clients::ChatBackend* caption = nullptr;
    clients::ChatBackend* reasoning = nullptr;
};

Prediction run_one(const VisualReasoningExample& ex, Strategy strategy,
                   const StrategyBackends& backends, const Templates& templates);

// Bounded worker pool over the dataset; predictions come back ordered by
// example id, independent of completion order.
std::vector<Prediction> run_all(const Dataset& dataset, Strategy strategy,
                                const StrategyBackends& backends, const Templates& templates,
                                int max_in_flight);

}  // namespace mvr::pipelines
