#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hila/core_model.hpp"

namespace hila {

enum class TemplateId { BaseMcq, BaseMath, BaseMathBoxed, BaseCode, BaseGeneric, Collaboration, MetaPolicy };

std::string_view to_string(TemplateId id);
/// Throws PromptError for unknown ids.
TemplateId parse_template_id(std::string_view text);

/// The base template a task kind starts from.
TemplateId base_template_for(TaskKind kind);

class PromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using PromptVars = std::map<std::string, std::string, std::less<>>;

/// Raw template text with {{placeholder}} markers.
std::string_view template_text(TemplateId id);

/// Substitutes every {{name}}. A placeholder without a binding is a
/// PromptError; extra bindings are ignored.
std::string render_prompt(TemplateId id, const PromptVars& vars);
std::string render_prompt(std::string_view template_id, const PromptVars& vars);

/// The base prompt for a task, with `question` = the task prompt.
std::string render_base_prompt(const TaskInstance& task);

}  // namespace hila
