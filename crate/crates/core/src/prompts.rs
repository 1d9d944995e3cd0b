//! Prompt templates for every VLM interaction.
//!
//! Rendering is plain placeholder substitution on fixed template strings, so
//! a given set of inputs always produces byte-identical prompts. The
//! pairwise multi-agent chain uses the observer/debater/judge templates; the
//! single-image variants are the same templates with the second image slot
//! removed and per-pair argument slots replaced by high/low argument slots.

use crate::mining::Dimension;

/// Stage-1 dimension extraction prompt.
pub const EXTRACTION_TEMPLATE: &str = r#"You are an expert urban perception researcher. I will show
you street-view images that have been rated by crowdsourced
participants on the perception dimension: "{category}".

HIGH-rated images (TrueSkill mu > 75th percentile):
{high_image_descriptions}

LOW-rated images (TrueSkill mu < 25th percentile):
{low_image_descriptions}

Based on the visual differences between HIGH and LOW images,
identify 5-10 specific, visually observable dimensions that
explain why some scenes are perceived as more "{category}"
than others.

Output JSON format:
{
  "dimensions": [
    {
      "name": "Dimension Name",
      "description": "What this dimension measures",
      "high_indicator": "Visual cues for high scores",
      "low_indicator": "Visual cues for low scores"
    }
  ]
}

Requirements:
- Each dimension must be visually observable from a street
  view image
- Each dimension must be continuously scorable (1-10 scale)
- Dimensions should be universally applicable across cities"#;

/// Soft-reference block appended to the extraction prompt when an elite
/// dimension set is available.
pub const ELITE_REFERENCE_TEMPLATE: &str = r#"

Current best dimension set (soft reference; deviate wherever you
see stronger alternatives):
{elite_dimensions}"#;

/// Converge-phase mutation prompt: keeps the elite set except for a small
/// number of targeted replacements.
pub const MUTATION_TEMPLATE: &str = r#"You are an expert urban perception researcher refining an
existing set of evaluation dimensions for the perception
dimension: "{category}".

The following dimensions are kept unchanged:
{kept_dimensions}

Propose exactly {replacement_count} replacement dimension(s) for
the slot(s) under revision. Every replacement must be visually
distinct from the kept dimensions and must not reuse their names.

Output JSON format:
{
  "dimensions": [
    {
      "name": "Dimension Name",
      "description": "What this dimension measures",
      "high_indicator": "Visual cues for high scores",
      "low_indicator": "Visual cues for low scores"
    }
  ]
}

Requirements:
- Each dimension must be visually observable from a street
  view image
- Each dimension must be continuously scorable (1-10 scale)
- Dimensions should be universally applicable across cities"#;

/// Observer agent, pairwise variant.
pub const OBSERVER_PAIR_TEMPLATE: &str = r#"You are an objective Observer. Examine two street-view
images and describe what you see along each evaluation
dimension. Do NOT make judgments or comparisons -- only
describe observable visual details.

Category: {category}
Dimensions:
{dimension_definitions}

For each dimension, describe what you observe in:
- Image A: [visual details]
- Image B: [visual details]

Output JSON:
{
  "observations": {
    "dimension_name": {
      "image_a": "description of what you see",
      "image_b": "description of what you see"
    }
  }
}"#;

/// Debater agent, pairwise variant.
pub const DEBATER_PAIR_TEMPLATE: &str = r#"You are a Debater. Given the Observer's descriptions of
two street-view images, argue BOTH sides for each
dimension -- why Image A might score higher AND why
Image B might score higher.

Observer's descriptions:
{observer_output}

Category: {category}
Dimensions:
{dimension_definitions}

For each dimension, provide:
- Argument for Image A scoring higher
- Argument for Image B scoring higher
- Key uncertainties or ambiguities

Output JSON:
{
  "debates": {
    "dimension_name": {
      "argument_for_a": "why A might score higher",
      "argument_for_b": "why B might score higher",
      "uncertainties": "what is ambiguous"
    }
  }
}"#;

/// Judge agent, pairwise variant.
pub const JUDGE_PAIR_TEMPLATE: &str = r#"You are the final Judge. Given the Observer's descriptions
and Debater's arguments, produce final scores for both
images on each dimension.

Observer's descriptions:
{observer_output}

Debater's arguments:
{debater_output}

Category: {category}
Dimensions:
{dimension_definitions}

Score each image on each dimension from 1 (lowest) to 10
(highest). Also determine the overall winner.

Output JSON:
{
  "image_a_scores": {
    "dimension_name": score (1-10)
  },
  "image_b_scores": {
    "dimension_name": score (1-10)
  },
  "overall_intensity_a": weighted_sum,
  "overall_intensity_b": weighted_sum,
  "winner": "left" | "right" | "equal",
  "ai_dimension_weights": {
    "dimension_name": weight (0-1)
  }
}"#;

/// Direct pairwise scoring (single-shot, no deliberation).
pub const DIRECT_PAIR_TEMPLATE: &str = r#"You are an expert urban perception rater. Examine two
street-view images and score each image on every evaluation
dimension from 1 (lowest) to 10 (highest). Also determine
the overall winner.

Category: {category}
Dimensions:
{dimension_definitions}

Output JSON:
{
  "image_a_scores": {
    "dimension_name": score (1-10)
  },
  "image_b_scores": {
    "dimension_name": score (1-10)
  },
  "winner": "left" | "right" | "equal"
}"#;

/// Direct single-image scoring (single-shot, no deliberation).
pub const DIRECT_SINGLE_TEMPLATE: &str = r#"You are an expert urban perception rater. Examine one
street-view image and score it on every evaluation dimension
from 1 (lowest) to 10 (highest).

Category: {category}
Dimensions:
{dimension_definitions}

Output JSON:
{
  "image_scores": {
    "dimension_name": score (1-10)
  }
}"#;

/// Observer agent, single-image variant.
pub const OBSERVER_SINGLE_TEMPLATE: &str = r#"You are an objective Observer. Examine one street-view
image and describe what you see along each evaluation
dimension. Do NOT make judgments -- only describe
observable visual details.

Category: {category}
Dimensions:
{dimension_definitions}

For each dimension, describe what you observe in:
- Image: [visual details]

Output JSON:
{
  "observations": {
    "dimension_name": {
      "image": "description of what you see"
    }
  }
}"#;

/// Debater agent, single-image variant.
pub const DEBATER_SINGLE_TEMPLATE: &str = r#"You are a Debater. Given the Observer's description of a
street-view image, argue BOTH sides for each dimension --
why the image might deserve a HIGH score AND why it might
deserve a LOW score.

Observer's descriptions:
{observer_output}

Category: {category}
Dimensions:
{dimension_definitions}

For each dimension, provide:
- Argument for a high score
- Argument for a low score
- Key uncertainties or ambiguities

Output JSON:
{
  "debates": {
    "dimension_name": {
      "argument_for_high": "why the score might be high",
      "argument_for_low": "why the score might be low",
      "uncertainties": "what is ambiguous"
    }
  }
}"#;

/// Judge agent, single-image variant.
pub const JUDGE_SINGLE_TEMPLATE: &str = r#"You are the final Judge. Given the Observer's descriptions
and Debater's arguments, produce final scores for the image
on each dimension.

Observer's descriptions:
{observer_output}

Debater's arguments:
{debater_output}

Category: {category}
Dimensions:
{dimension_definitions}

Score the image on each dimension from 1 (lowest) to 10
(highest).

Output JSON:
{
  "image_scores": {
    "dimension_name": score (1-10)
  }
}"#;

/// Renders the `{dimension_definitions}` block shared by all scoring
/// prompts, one line per dimension.
pub fn render_dimension_definitions(dimensions: &[Dimension]) -> String {
    let mut out = String::new();
    for (i, dim) in dimensions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!(
            "- {}: {} (high: {}; low: {})",
            dim.name, dim.description, dim.high_indicator, dim.low_indicator
        ));
    }
    out
}

/// Substitutes `{placeholder}` markers in a template. Only the provided
/// placeholder names are replaced, so JSON braces in the templates pass
/// through untouched.
pub fn render(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in substitutions {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Vec<Dimension> {
        vec![
            Dimension {
                name: "Facade Upkeep".to_string(),
                description: "Condition of building fronts".to_string(),
                high_indicator: "fresh paint".to_string(),
                low_indicator: "peeling walls".to_string(),
            },
            Dimension {
                name: "Greenery Density".to_string(),
                description: "Amount of maintained vegetation".to_string(),
                high_indicator: "trimmed trees".to_string(),
                low_indicator: "bare lots".to_string(),
            },
        ]
    }

    #[test]
    fn render_replaces_only_named_placeholders() {
        let out = render("a {x} b {y} c {\n  \"k\": 1\n}", &[("x", "1"), ("y", "2")]);
        assert_eq!(out, "a 1 b 2 c {\n  \"k\": 1\n}");
    }

    #[test]
    fn extraction_template_mentions_category_twice() {
        assert_eq!(EXTRACTION_TEMPLATE.matches("{category}").count(), 2);
    }

    #[test]
    fn dimension_definitions_are_one_line_each() {
        let block = render_dimension_definitions(&dims());
        assert_eq!(block.lines().count(), 2);
        assert!(block.starts_with("- Facade Upkeep: "));
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render(JUDGE_PAIR_TEMPLATE, &[("category", "wealthy")]);
        let b = render(JUDGE_PAIR_TEMPLATE, &[("category", "wealthy")]);
        assert_eq!(a, b);
    }
}
