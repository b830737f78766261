#include "fieldvqa/prompting.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fieldvqa/errors.hpp"

namespace fieldvqa {

std::string_view to_string(Strategy strategy) {
  return strategy == Strategy::kJoint ? "joint" : "separate";
}

std::optional<Strategy> parse_strategy(std::string_view text) {
  if (text == "separate") return Strategy::kSeparate;
  if (text == "joint") return Strategy::kJoint;
  return std::nullopt;
}

PromptPlan PromptPlan::zero_shot(Strategy strategy, std::string doc_kind_phrase) {
  PromptPlan plan;
  plan.strategy = strategy;
  plan.doc_kind_phrase = std::move(doc_kind_phrase);
  if (strategy == Strategy::kJoint) plan.output_instruction = std::string(kDefaultJointInstruction);
  return plan;
}

std::vector<PromptPart> RenderedPrompt::parts() const {
  std::vector<PromptPart> out;
  const std::size_t exemplar_count = exemplar_answers.size();
  for (std::size_t i = 0; i < exemplar_count && i + 1 < images.size(); ++i) {
    out.push_back({PromptPart::Kind::kImage, images[i]});
    out.push_back({PromptPart::Kind::kText, exemplar_answers[i]});
  }
  out.push_back({PromptPart::Kind::kText, text});
  if (!images.empty()) out.push_back({PromptPart::Kind::kImage, images.back()});
  return out;
}

std::string join_series(std::span<const std::string> names) {
  if (names.empty()) return {};
  if (names.size() == 1) return names[0];
  if (names.size() == 2) return names[0] + " and " + names[1];
  std::string out;
  for (std::size_t i = 0; i + 1 < names.size(); ++i) {
    out += names[i];
    out += ", ";
  }
  out += "and ";
  out += names.back();
  return out;
}

namespace {

std::string instruction_head(std::string_view doc_kind_phrase) {
  const bool vowel = !doc_kind_phrase.empty() &&
                     std::string_view("aeiouAEIOU").find(doc_kind_phrase.front()) != std::string_view::npos;
  return fmt::format("Given the following image of {} {}, extract the ", vowel ? "an" : "a", doc_kind_phrase);
}

void check_plan(const PromptPlan& plan, Strategy expected) {
  if (plan.strategy != expected) {
    throw ConfigError(fmt::format("prompt plan strategy is {}, expected {}", to_string(plan.strategy),
                                  to_string(expected)));
  }
  if (plan.shots < 0) throw ConfigError("shots must be >= 0");
  if (static_cast<std::size_t>(plan.shots) != plan.exemplars.size()) {
    throw ConfigError(fmt::format("plan requests {} shots but carries {} exemplars", plan.shots,
                                  plan.exemplars.size()));
  }
}

}  // namespace

std::string render_answer(std::span<const FieldSpec> fields, const std::map<std::string, std::string>& values,
                          Strategy strategy, bool structured) {
  auto value_of = [&](const FieldSpec& f) -> const std::string& {
    auto it = values.find(f.id);
    if (it == values.end()) throw DataError(fmt::format("exemplar is missing a value for '{}'", f.id));
    return it->second;
  };
  if (structured) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (const auto& f : fields) obj[f.display_name] = value_of(f);
    return obj.dump();
  }
  if (strategy == Strategy::kSeparate && fields.size() == 1) return value_of(fields.front());
  std::string out;
  for (const auto& f : fields) {
    if (!out.empty()) out += '\n';
    out += f.display_name + ": " + value_of(f);
  }
  return out;
}

RenderedPrompt attach_few_shot(RenderedPrompt prompt, std::span<const FieldSpec> fields,
                               std::span<const Exemplar> exemplars, int k, ExemplarMode mode,
                               bool structured_answer) {
  if (k < 0 || static_cast<std::size_t>(k) != exemplars.size()) {
    throw ConfigError(fmt::format("few-shot k={} does not match {} exemplars", k, exemplars.size()));
  }
  if (k == 0) return prompt;

  std::vector<FieldSpec> requested;
  for (const auto& id : prompt.field_ids) {
    auto it = std::find_if(fields.begin(), fields.end(), [&](const FieldSpec& f) { return f.id == id; });
    if (it == fields.end()) throw ConfigError(fmt::format("prompt field '{}' has no FieldSpec", id));
    requested.push_back(*it);
  }

  std::vector<std::string> answers;
  answers.reserve(exemplars.size());
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    for (const auto& f : requested) {
      if (!exemplars[i].values.contains(f.id)) {
        throw DataError(fmt::format("exemplar {} lacks a value for requested field '{}'", i, f.id));
      }
    }
    answers.push_back(render_answer(requested, exemplars[i].values, prompt.strategy, structured_answer));
  }

  if (mode == ExemplarMode::kMultiImage) {
    std::vector<std::string> images;
    for (const auto& e : exemplars) images.push_back(e.image);
    images.insert(images.end(), prompt.images.begin(), prompt.images.end());
    prompt.images = std::move(images);
    answers.insert(answers.begin(), prompt.exemplar_answers.begin(), prompt.exemplar_answers.end());
    prompt.exemplar_answers = std::move(answers);
    return prompt;
  }

  std::string prefix;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    prefix += fmt::format("Example {}:\n{}\n\n", i + 1, answers[i]);
  }
  prompt.text = prefix + prompt.text;
  return prompt;
}

std::vector<RenderedPrompt> build_separate_prompts(std::span<const FieldSpec> fields, const DocumentRecord& doc,
                                                   const PromptPlan& plan) {
  check_plan(plan, Strategy::kSeparate);
  if (fields.empty()) throw ConfigError("separate extraction needs at least one field");
  const auto head = instruction_head(plan.doc_kind_phrase);
  std::vector<RenderedPrompt> prompts;
  prompts.reserve(fields.size());
  for (const auto& f : fields) {
    RenderedPrompt p;
    p.document_id = doc.id;
    p.strategy = Strategy::kSeparate;
    p.field_ids = {f.id};
    p.text = head + f.display_name + ".";
    if (plan.output_instruction) p.text += " " + *plan.output_instruction;
    p.images = {doc.image};
    prompts.push_back(attach_few_shot(std::move(p), std::span(&f, 1), plan.exemplars, plan.shots,
                                      plan.exemplar_mode, plan.output_instruction.has_value()));
  }
  return prompts;
}

RenderedPrompt build_joint_prompt(std::span<const FieldSpec> fields, const DocumentRecord& doc,
                                  const PromptPlan& plan) {
  check_plan(plan, Strategy::kJoint);
  if (fields.size() < 2) {
    throw ConfigError(fmt::format("joint extraction needs at least 2 fields, got {}", fields.size()));
  }
  std::vector<std::string> names;
  RenderedPrompt p;
  p.document_id = doc.id;
  p.strategy = Strategy::kJoint;
  for (const auto& f : fields) {
    names.push_back(f.display_name);
    p.field_ids.push_back(f.id);
  }
  p.text = instruction_head(plan.doc_kind_phrase) + join_series(names) + ".";
  if (plan.output_instruction) p.text += " " + *plan.output_instruction;
  p.images = {doc.image};
  return attach_few_shot(std::move(p), fields, plan.exemplars, plan.shots, plan.exemplar_mode,
                         plan.output_instruction.has_value());
}

std::vector<Exemplar> select_exemplars(const DatasetBundle& pool, std::string_view query_doc_id,
                                       std::span<const std::string> field_ids, int k) {
  if (k <= 0) return {};
  std::vector<const DocumentRecord*> ordered;
  for (const auto& d : pool.documents) ordered.push_back(&d);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  std::vector<Exemplar> out;
  for (const auto* d : ordered) {
    if (d->id == query_doc_id) continue;
    const bool covers = std::all_of(field_ids.begin(), field_ids.end(),
                                    [&](const std::string& id) { return d->has_field(id); });
    if (!covers) continue;
    out.push_back(Exemplar{d->image, d->truth});
    if (out.size() == static_cast<std::size_t>(k)) return out;
  }
  throw DataError(fmt::format("only {} exemplar(s) cover the requested fields; {} needed", out.size(), k));
}

}  // namespace fieldvqa
