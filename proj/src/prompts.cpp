#include "hila/prompts.hpp"

namespace hila {

namespace {

constexpr std::string_view kBaseMcq =
    "Answer the following multiple-choice question. Choose the single best option.\n"
    "\n"
    "Solve the problem:\n"
    "\n"
    "{{question}}\n"
    "\n"
    "Think step by step, show your reasoning, and end your response with a single line that clearly states the "
    "final answer.";

constexpr std::string_view kBaseMath =
    "Solve the following problem:\n"
    "\n"
    "{{question}}\n"
    "\n"
    "Think step by step, show your reasoning, and be careful with arithmetic. End your response with a single "
    "line that clearly states the final answer. If the answer is a number, output only the number on that final "
    "line.";

constexpr std::string_view kBaseMathBoxed =
    "Solve the following problem:\n"
    "\n"
    "{{question}}\n"
    "\n"
    "Think step by step, show your reasoning, and be careful with arithmetic. Must give the final answer in the "
    "form \\boxed{...}.";

constexpr std::string_view kBaseCode =
    "You are given a Python programming task. Write a correct and efficient solution that passes all unit tests.\n"
    "\n"
    "Rules:\n"
    "- Output ONLY Python code.\n"
    "- Do NOT include explanations, comments outside the given prompt, or additional text.\n"
    "- Keep the original function signature exactly as given.\n"
    "- Do not write any test code. Do not use input() or print().\n"
    "- You may use the Python standard library.\n"
    "\n"
    "{{question}}";

constexpr std::string_view kBaseGeneric =
    "Solve the following problem:\n"
    "\n"
    "{{question}}\n"
    "\n"
    "Think step by step. End your response with a single line that clearly states the final answer. If the "
    "answer is a number, output only the number on that final line.";

constexpr std::string_view kCollaboration =
    "You are in a multi-agent collaboration.\n"
    "\n"
    "=== Original Prompt ===\n"
    "\n"
    "{{base_prompt}}\n"
    "\n"
    "=== Your Previous Responses ===\n"
    "\n"
    "{{self_history_block}}\n"
    "\n"
    "=== Other Agents' Responses ===\n"
    "\n"
    "{{others_history_block}}\n"
    "\n"
    "Now compare the solutions, resolve disagreements, and provide an UPDATED final answer. Keep reasoning "
    "concise but correct. Finish with a clear final answer line.";

constexpr std::string_view kMetaPolicy =
    "You are a meta-policy controller for a multi-agent system. Choose ONE action and output ONLY the action "
    "line.\n"
    "\n"
    "Valid actions (no extra text):\n"
    "- DEFER (ask a human expert)\n"
    "- EVAL <idx> (copy Agent idx; idx in 0..N-1)\n"
    "- CREATE (write a new solution yourself)\n"
    "\n"
    "{{structured_decision_signals}}\n"
    "\n"
    "=== Problem ===\n"
    "\n"
    "{{base_prompt}}\n"
    "\n"
    "=== Your Latest Solution ===\n"
    "\n"
    "{{self_latest_solution}}\n"
    "\n"
    "=== Other Agents' Latest Solutions ===\n"
    "\n"
    "{{others_latest_solutions}}\n"
    "\n"
    "Now output ONLY one action line.";

}  // namespace

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::BaseMcq: return "base-mcq";
    case TemplateId::BaseMath: return "base-math";
    case TemplateId::BaseMathBoxed: return "base-math-boxed";
    case TemplateId::BaseCode: return "base-code";
    case TemplateId::BaseGeneric: return "base-generic";
    case TemplateId::Collaboration: return "collaboration";
    case TemplateId::MetaPolicy: return "meta-policy";
  }
  return "base-generic";
}

TemplateId parse_template_id(std::string_view text) {
  for (auto id : {TemplateId::BaseMcq, TemplateId::BaseMath, TemplateId::BaseMathBoxed, TemplateId::BaseCode,
                  TemplateId::BaseGeneric, TemplateId::Collaboration, TemplateId::MetaPolicy}) {
    if (to_string(id) == text) return id;
  }
  throw PromptError("unknown template: " + std::string(text));
}

TemplateId base_template_for(TaskKind kind) {
  switch (kind) {
    case TaskKind::MultipleChoice: return TemplateId::BaseMcq;
    case TaskKind::MathNumeric: return TemplateId::BaseMath;
    case TaskKind::MathBoxed: return TemplateId::BaseMathBoxed;
    case TaskKind::Code: return TemplateId::BaseCode;
    case TaskKind::Generic: return TemplateId::BaseGeneric;
  }
  return TemplateId::BaseGeneric;
}

std::string_view template_text(TemplateId id) {
  switch (id) {
    case TemplateId::BaseMcq: return kBaseMcq;
    case TemplateId::BaseMath: return kBaseMath;
    case TemplateId::BaseMathBoxed: return kBaseMathBoxed;
    case TemplateId::BaseCode: return kBaseCode;
    case TemplateId::BaseGeneric: return kBaseGeneric;
    case TemplateId::Collaboration: return kCollaboration;
    case TemplateId::MetaPolicy: return kMetaPolicy;
  }
  return kBaseGeneric;
}

std::string render_prompt(TemplateId id, const PromptVars& vars) {
  const std::string_view tpl = template_text(id);
  std::string out;
  out.reserve(tpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const std::size_t open = tpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    const std::size_t close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw PromptError("unterminated placeholder in template");
    out.append(tpl.substr(pos, open - pos));
    const std::string_view name = tpl.substr(open + 2, close - open - 2);
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw PromptError("unbound placeholder {{" + std::string(name) + "}} in template " + std::string(to_string(id)));
    }
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::string render_prompt(std::string_view template_id, const PromptVars& vars) {
  return render_prompt(parse_template_id(template_id), vars);
}

std::string render_base_prompt(const TaskInstance& task) {
  return render_prompt(base_template_for(task.kind), {{"question", task.prompt}});
}

}  // namespace hila
