#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sievefl/corpus.hpp"
#include "sievefl/failure.hpp"

namespace sievefl {

enum class Stage { Analysis, Screening, Rerank };

std::string_view to_string(Stage stage);

struct PromptRendering {
    std::string system_text;
    std::string user_text;
    Stage stage = Stage::Analysis;
    std::map<std::string, std::string> bound_variables;
};

/// Character budgets for the variable parts of each prompt.
struct PromptBudgets {
    std::size_t analysis_chars = 24000;   // test code + error output
    std::size_t screening_chars = 16000;  // method source
    std::size_t rerank_chars = 48000;     // whole suspect list
};

/// Keeps the head and tail of `text` and replaces the middle by an omission
/// marker so the result has at most `budget` characters.
std::string truncate_middle(std::string_view text, std::size_t budget);

/// Substitutes {name} placeholders in one pass. Throws ContractViolation if
/// the template names a placeholder that is not bound.
std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// The placeholder names appearing in a template, in order of first use.
std::vector<std::string> placeholders(std::string_view tmpl);

namespace templates {
extern const std::string_view kAnalysisSystem;
extern const std::string_view kAnalysisUser;
extern const std::string_view kScreeningSystem;
extern const std::string_view kScreeningUser;
extern const std::string_view kRerankSystem;
extern const std::string_view kRerankUser;
}  // namespace templates

/// Stage 1. Throws InputError when the test code is empty.
PromptRendering render_analysis_prompt(const FailureContext& ctx, const PromptBudgets& budgets = {});

/// Stage 4: one method per prompt.
PromptRendering render_screening_prompt(const FailureContext& ctx, const FailureDescription& desc,
                                        const MethodDocument& method,
                                        const PromptBudgets& budgets = {});

struct SuspectBlock {
    std::string label;
    std::string code;
    std::string justification;
};

/// "Suspect <n>: <label>" headers, code fenced, justification below.
std::string format_suspect_list(const std::vector<SuspectBlock>& suspects, std::size_t budget);

/// Stage 5: all confirmed suspects in one prompt.
PromptRendering render_rerank_prompt(const FailureContext& ctx, const FailureDescription& desc,
                                     const std::vector<SuspectBlock>& suspects,
                                     const PromptBudgets& budgets = {});

/// Javadoc followed by the method source, as shown to the model.
std::string method_code(const MethodDocument& method);

}  // namespace sievefl
