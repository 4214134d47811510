#include "sievefl/prompts.hpp"

#include "sievefl/errors.hpp"

#include <algorithm>

namespace sievefl {

namespace templates {

const std::string_view kAnalysisSystem =
    "You are an expert software debugger with deep knowledge of Java and common fault patterns.";

const std::string_view kAnalysisUser =
    "Analyze the following failing test case:\n"
    "{test_code}.\n"
    "\n"
    "Your response must address three points:\n"
    "1. Explain the **expected behavior** of the tested functionality.\n"
    "2. Explain the **actual observed failure**, including the error type and any relevant "
    "context from the stack trace.\n"
    "3. Generate a concise **search query** (2-5 sentences) describing the likely faulty "
    "functionality in natural language, as if you were searching a codebase for the methods "
    "responsible for this behavior.";

const std::string_view kScreeningSystem =
    "You are a senior software engineer specializing in Java fault analysis.";

const std::string_view kScreeningUser =
    "A test is failing with the following error:\n"
    "{error_output}\n"
    "\n"
    "Failure description: {failure_description}\n"
    "\n"
    "Examine the following method carefully:\n"
    "{method_code}\n"
    "\n"
    "Reason step-by-step about whether a defect in this method could produce the observed "
    "failure. Then answer:\n"
    "**Verdict:** *Suspicious* or *Not Suspicious*\n"
    "**Justification:** One to three sentences explaining your reasoning.";

const std::string_view kRerankSystem =
    "You are a senior software engineer performing final root-cause triage.";

const std::string_view kRerankUser =
    "A test is failing with the following error:\n"
    "{error_output}\n"
    "\n"
    "Failure description: {failure_description}\n"
    "\n"
    "The following methods have each been identified as individually suspicious. For each, "
    "the method code and a preliminary analysis are provided:\n"
    "{suspect_list_with_justifications}\n"
    "\n"
    "Considering all suspects together, rank them from most to least likely to be the true "
    "fault site. Provide a one-sentence comparative justification for each position in your "
    "ranking.";

}  // namespace templates

namespace {

bool is_placeholder_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Length of a "{name}" placeholder starting at `pos`, or 0.
std::size_t placeholder_at(std::string_view tmpl, std::size_t pos) {
    if (tmpl[pos] != '{') return 0;
    std::size_t j = pos + 1;
    while (j < tmpl.size() && is_placeholder_char(tmpl[j])) ++j;
    if (j == pos + 1 || j >= tmpl.size() || tmpl[j] != '}') return 0;
    return j - pos + 1;
}

std::string omission_marker(std::size_t omitted) {
    return "\n...[" + std::to_string(omitted) + " characters omitted]...\n";
}

// Error output is capped at a quarter of the stage budget; the rest goes to
// the primary content.
constexpr std::size_t kErrorShareDivisor = 4;
constexpr std::size_t kMinJustificationChars = 200;

}  // namespace

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Analysis: return "analysis";
        case Stage::Screening: return "screening";
        case Stage::Rerank: return "rerank";
    }
    return "unknown";
}

std::string truncate_middle(std::string_view text, std::size_t budget) {
    if (text.size() <= budget) return std::string(text);
    std::size_t omitted = text.size() - budget;
    std::string marker;
    for (int i = 0; i < 3; ++i) {
        marker = omission_marker(omitted);
        if (marker.size() >= budget) return std::string(text.substr(0, budget));
        omitted = text.size() - (budget - marker.size());
    }
    const std::size_t keep = budget - marker.size();
    const std::size_t tail = keep / 2;
    const std::size_t head = keep - tail;
    return std::string(text.substr(0, head)) + marker + std::string(text.substr(text.size() - tail));
}

std::vector<std::string> placeholders(std::string_view tmpl) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (const auto len = placeholder_at(tmpl, i)) {
            std::string name(tmpl.substr(i + 1, len - 2));
            if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
            i += len - 1;
        }
    }
    return names;
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (const auto len = placeholder_at(tmpl, i)) {
            const std::string name(tmpl.substr(i + 1, len - 2));
            const auto it = vars.find(name);
            if (it == vars.end()) throw ContractViolation("unbound prompt placeholder {" + name + "}");
            out += it->second;
            i += len - 1;
        } else {
            out += tmpl[i];
        }
    }
    return out;
}

std::string method_code(const MethodDocument& method) {
    return method.doc_comment.empty() ? method.body_text
                                      : method.doc_comment + "\n" + method.body_text;
}

PromptRendering render_analysis_prompt(const FailureContext& ctx, const PromptBudgets& budgets) {
    if (ctx.failing_test_code.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw InputError("bug " + ctx.bug_id + ": failing test code is empty");
    }
    const std::string error =
        truncate_middle(ctx.error_output, budgets.analysis_chars / kErrorShareDivisor);
    const std::string error_part = error.empty() ? "" : "\n\nError output:\n" + error;
    const std::size_t test_budget =
        budgets.analysis_chars > error_part.size() ? budgets.analysis_chars - error_part.size() : 0;

    PromptRendering r;
    r.stage = Stage::Analysis;
    r.bound_variables["test_code"] = truncate_middle(ctx.failing_test_code, test_budget) + error_part;
    r.system_text = std::string(templates::kAnalysisSystem);
    r.user_text = substitute(templates::kAnalysisUser, r.bound_variables);
    return r;
}

PromptRendering render_screening_prompt(const FailureContext& ctx, const FailureDescription& desc,
                                        const MethodDocument& method,
                                        const PromptBudgets& budgets) {
    PromptRendering r;
    r.stage = Stage::Screening;
    r.bound_variables["error_output"] =
        truncate_middle(ctx.error_output, budgets.screening_chars / kErrorShareDivisor);
    r.bound_variables["failure_description"] = desc.prose();
    r.bound_variables["method_code"] = truncate_middle(method_code(method), budgets.screening_chars);
    r.system_text = std::string(templates::kScreeningSystem);
    r.user_text = substitute(templates::kScreeningUser, r.bound_variables);
    return r;
}

std::string format_suspect_list(const std::vector<SuspectBlock>& suspects, std::size_t budget) {
    if (suspects.empty()) return {};
    const std::size_t share = budget / suspects.size();
    std::string out;
    for (std::size_t i = 0; i < suspects.size(); ++i) {
        const auto& s = suspects[i];
        std::string justification = s.justification;
        std::string code = s.code;
        if (code.size() + justification.size() > share) {
            const std::size_t room = share > code.size() ? share - code.size() : 0;
            const std::size_t keep_just = std::min(
                justification.size(), std::max(room, kMinJustificationChars));
            justification = truncate_middle(justification, keep_just);
            const std::size_t code_budget =
                share > justification.size() ? share - justification.size() : 0;
            code = truncate_middle(code, code_budget);
        }
        if (i) out += "\n";
        out += "Suspect " + std::to_string(i + 1) + ": " + s.label + "\n";
        out += "```java\n" + code + "\n```\n";
        out += "Preliminary analysis: " + justification + "\n";
    }
    return out;
}

PromptRendering render_rerank_prompt(const FailureContext& ctx, const FailureDescription& desc,
                                     const std::vector<SuspectBlock>& suspects,
                                     const PromptBudgets& budgets) {
    PromptRendering r;
    r.stage = Stage::Rerank;
    r.bound_variables["error_output"] =
        truncate_middle(ctx.error_output, budgets.rerank_chars / kErrorShareDivisor);
    r.bound_variables["failure_description"] = desc.prose();
    r.bound_variables["suspect_list_with_justifications"] =
        format_suspect_list(suspects, budgets.rerank_chars);
    r.system_text = std::string(templates::kRerankSystem);
    r.user_text = substitute(templates::kRerankUser, r.bound_variables);
    return r;
}

}  // namespace sievefl
