#include "socialveil/barrier.hpp"

#include "socialveil/errors.hpp"
#include "socialveil/json_io.hpp"
#include "socialveil/resources.hpp"
#include "socialveil/text.hpp"

namespace socialveil {

InstructionFragment::InstructionFragment(std::string text, Provenance provenance)
    : text_(std::move(text)), provenance_(provenance) {
  if (text_.empty()) throw InputError("instruction fragment text must be nonempty");
}

BarrierSpec Taxonomy::spec_for(BarrierType type) const {
  if (type == BarrierType::kNone) return BarrierSpec::none();
  auto it = specs.find(type);
  if (it == specs.end()) {
    throw InputError("taxonomy has no spec for " + std::string(to_string(type)));
  }
  return it->second;
}

Taxonomy parse_taxonomy(std::string_view json_text, const std::string& origin) {
  Json root = parse_json(std::string(json_text), origin);
  const Json& items = root.is_object() && root.contains("barriers") ? root.at("barriers") : root;
  if (!items.is_array()) throw InputError(origin + ": expected an array of barrier specs");
  Taxonomy tax;
  for (const auto& item : items) {
    BarrierSpec spec;
    try {
      spec = item.get<BarrierSpec>();
    } catch (const InputError& e) {
      throw InputError(origin + ": " + e.what());
    }
    if (spec.is_none()) throw InputError(origin + ": the taxonomy lists only non-None barriers");
    if (spec.style_prompt.empty() || spec.narrative_stance.empty() ||
        spec.interaction_tactics.empty() || spec.confusion_mechanisms.empty() ||
        spec.exemplar_templates.empty()) {
      throw InputError(origin + ": " + std::string(to_string(spec.barrier_type)) +
                       " spec must populate the style prompt and all four dimensions");
    }
    if (tax.specs.count(spec.barrier_type)) {
      throw InputError(origin + ": duplicate spec for " +
                       std::string(to_string(spec.barrier_type)));
    }
    BarrierDefinition def;
    def.label = get_field_or<std::string>(item, "label",
                                          to_lower(to_string(spec.barrier_type)));
    def.definition = get_field_or<std::string>(item, "definition", "");
    def.real_world_example = get_field_or<std::string>(item, "real_world_example", "");
    tax.definitions[spec.barrier_type] = std::move(def);
    tax.specs[spec.barrier_type] = std::move(spec);
  }
  if (tax.specs.empty()) throw InputError(origin + ": no barrier specs");
  return tax;
}

Taxonomy builtin_taxonomy() {
  return parse_taxonomy(resource("taxonomy.json"), "builtin taxonomy");
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  return parse_taxonomy(read_file(path), path.string());
}

namespace {

void append_block(std::string& out, std::string_view label,
                  const std::vector<std::string>& items) {
  out += kFragmentSeparator;
  out += label;
  out += ":";
  for (const auto& item : items) {
    out += "\n- ";
    out += item;
  }
}

}  // namespace

InstructionFragment compose_barrier_fragment(const BarrierSpec& b) {
  if (b.is_none()) throw InputError("no fragment for empty barrier");
  std::string out = b.style_prompt;
  append_block(out, "Narrative stance", {b.narrative_stance});
  append_block(out, "Interaction tactics", b.interaction_tactics);
  append_block(out, "Confusion mechanisms", b.confusion_mechanisms);
  append_block(out, "Exemplar templates", b.exemplar_templates);
  return InstructionFragment(std::move(out), Provenance::kBarrier);
}

std::string augment_instruction(const InstructionFragment& base, const BarrierSpec& b) {
  if (base.provenance() != Provenance::kBase) {
    throw InputError("augment_instruction expects a base instruction");
  }
  if (b.is_none()) return base.text();
  std::string out = base.text();
  out += kFragmentSeparator;
  out += compose_barrier_fragment(b).text();
  return out;
}

std::string append_repair(std::string_view prompt, const InstructionFragment& repair) {
  std::string suffix = std::string(kFragmentSeparator) + repair.text();
  if (prompt.size() >= suffix.size() &&
      prompt.substr(prompt.size() - suffix.size()) == suffix) {
    return std::string(prompt);
  }
  return std::string(prompt) + suffix;
}

ChatRequest render_neutralize_request(const Scenario& s, const std::string& model_id,
                                      const NeutralizeOptions& options) {
  std::string text = format_template(resource("prompts/neutralize.txt"),
                                     {{"scenario", s.raw_description}});
  ChatRequest req({{MessageRole::kUser, std::move(text)}}, options.temperature,
                  options.max_tokens, model_id);
  RequestTag tag;
  tag.purpose = "rewriter";
  tag.episode_id = s.id;
  return req.with_tag(std::move(tag));
}

NeutralizeResult neutralize_scenario(const Scenario& s, ChatBackend& rewriter,
                                     const NeutralizeOptions& options) {
  if (s.raw_description.empty()) {
    throw InputError("scenario " + s.id + " has an empty raw_description");
  }
  ChatRequest base = render_neutralize_request(s, rewriter.model_id(), options);
  NeutralizeResult result;
  result.scenario = s;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    Completion c = rewriter.complete(base.with_sample_index(attempt));
    result.last_output = trim(c.text);
    result.retry_count = attempt;
    if (!result.last_output.empty() && is_single_sentence(result.last_output)) {
      result.scenario.neutral_description = result.last_output;
      return result;
    }
  }
  result.needs_review = true;
  return result;
}

}  // namespace socialveil
