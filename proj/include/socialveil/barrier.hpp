#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "socialveil/backend.hpp"
#include "socialveil/core.hpp"

namespace socialveil {

enum class Provenance { kBase, kBarrier, kRepair };

class InstructionFragment {
 public:
  // Throws InputError for empty text.
  InstructionFragment(std::string text, Provenance provenance);

  const std::string& text() const { return text_; }
  Provenance provenance() const { return provenance_; }

  bool operator==(const InstructionFragment&) const = default;

 private:
  std::string text_;
  Provenance provenance_;
};

// Human-facing description of a barrier type, shown to annotators.
struct BarrierDefinition {
  std::string label;  // annotation label: semantic / cultural / emotional
  std::string definition;
  std::string real_world_example;
};

struct Taxonomy {
  std::map<BarrierType, BarrierSpec> specs;
  std::map<BarrierType, BarrierDefinition> definitions;

  // The None type maps to the empty spec.
  BarrierSpec spec_for(BarrierType type) const;
};

// The three shipped barrier specs (data/taxonomy.json).
Taxonomy builtin_taxonomy();
Taxonomy parse_taxonomy(std::string_view json_text, const std::string& origin);
Taxonomy load_taxonomy(const std::filesystem::path& path);

inline constexpr std::string_view kFragmentSeparator = "\n\n";

// Style prompt first, then labelled bullet blocks in the order: narrative
// stance, interaction tactics, confusion mechanisms, exemplar templates.
// Throws InputError for a None spec.
InstructionFragment compose_barrier_fragment(const BarrierSpec& b);

// base.text() unchanged for a None spec, otherwise
// base.text() + separator + fragment. Throws InputError unless base has
// provenance kBase.
std::string augment_instruction(const InstructionFragment& base, const BarrierSpec& b);

// Appends the repair block after the prompt. Idempotent: a prompt that
// already ends with the block is returned unchanged.
std::string append_repair(std::string_view prompt, const InstructionFragment& repair);

struct NeutralizeOptions {
  int retries = 2;  // attempts = retries + 1
  double temperature = 0.0;
  int max_tokens = 128;
};

struct NeutralizeResult {
  Scenario scenario;  // neutral_description set on success
  int retry_count = 0;
  bool needs_review = false;
  std::string last_output;
};

// The request sent to the rewriter: the neutralization template with the
// raw description substituted, as a single user message.
ChatRequest render_neutralize_request(const Scenario& s, const std::string& model_id,
                                      const NeutralizeOptions& options);

// Transport errors from the rewriter propagate.
NeutralizeResult neutralize_scenario(const Scenario& s, ChatBackend& rewriter,
                                     const NeutralizeOptions& options = {});

}  // namespace socialveil
