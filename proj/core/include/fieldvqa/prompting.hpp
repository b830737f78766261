#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fieldvqa/dataset.hpp"

namespace fieldvqa {

enum class Strategy { kSeparate, kJoint };

std::string_view to_string(Strategy strategy);
std::optional<Strategy> parse_strategy(std::string_view text);

// A labeled example shown to the model before the query.
struct Exemplar {
  std::string image;
  std::map<std::string, std::string> values;  // field id -> gold value
};

// How exemplars travel to the backend.
enum class ExemplarMode {
  kMultiImage,  // exemplar image followed by its ideal answer, per exemplar
  kTextOnly,    // "Name: value" blocks folded into the prompt text, no images
};

inline constexpr std::string_view kDefaultJointInstruction =
    "Respond with one JSON object mapping each requested item to its value, copied exactly as printed.";

struct PromptPlan {
  Strategy strategy = Strategy::kSeparate;
  std::string doc_kind_phrase = "receipt";
  int shots = 0;
  std::vector<Exemplar> exemplars;
  std::optional<std::string> output_instruction;
  ExemplarMode exemplar_mode = ExemplarMode::kMultiImage;

  // Defaults: instruction on for joint, off for separate.
  static PromptPlan zero_shot(Strategy strategy, std::string doc_kind_phrase = "receipt");
};

struct PromptPart {
  enum class Kind { kText, kImage };
  Kind kind;
  std::string content;  // text, or image reference

  bool operator==(const PromptPart&) const = default;
};

struct RenderedPrompt {
  std::string document_id;
  Strategy strategy = Strategy::kSeparate;
  std::vector<std::string> field_ids;
  std::string text;
  // Exemplar images first, query image last.
  std::vector<std::string> images;
  // One rendered ideal answer per multi-image exemplar, aligned with images.
  std::vector<std::string> exemplar_answers;

  // Message content in send order: (exemplar image, exemplar answer)*, text, query image.
  std::vector<PromptPart> parts() const;
  const std::string& query_image() const { return images.back(); }

  bool operator==(const RenderedPrompt&) const = default;
};

// One prompt per field: "Given the following image of a {kind}, extract the {name}."
std::vector<RenderedPrompt> build_separate_prompts(std::span<const FieldSpec> fields, const DocumentRecord& doc,
                                                   const PromptPlan& plan);

// One prompt naming every field: "..., extract the A, B, and C."
RenderedPrompt build_joint_prompt(std::span<const FieldSpec> fields, const DocumentRecord& doc,
                                  const PromptPlan& plan);

// Prepends k exemplar blocks; k == 0 returns the prompt unchanged.
RenderedPrompt attach_few_shot(RenderedPrompt prompt, std::span<const FieldSpec> fields,
                               std::span<const Exemplar> exemplars, int k,
                               ExemplarMode mode = ExemplarMode::kMultiImage,
                               bool structured_answer = false);

// Ideal answer text for an exemplar, in the shape the prompt asks for.
std::string render_answer(std::span<const FieldSpec> fields, const std::map<std::string, std::string>& values,
                          Strategy strategy, bool structured);

// First k documents of `pool` in id order that carry every requested field,
// never the query document itself.
std::vector<Exemplar> select_exemplars(const DatasetBundle& pool, std::string_view query_doc_id,
                                       std::span<const std::string> field_ids, int k);

// "A", "A and B", "A, B, and C"
std::string join_series(std::span<const std::string> names);

}  // namespace fieldvqa
