//! In-context example selection, bias injection and prompt rendering.

mod bias;
mod inject;
mod presets;
mod template;

pub use bias::{
    AlignmentRule, BiasMode, BiasSpec, CellTarget, CompiledBias, CompiledRule, Direction,
    RuleGenerator,
};
pub use inject::{
    craft_adversarial_examples, inject_conditional_bias, inject_intersectional_bias,
    inject_marginal_bias, injected_count, mix_adversarial, mix_adversarial_with,
    select_icl_examples, MixedPool, PoolSampler, RecordSampler,
};
pub use presets::{adversarial_preset, AttackPreset};
pub use template::{
    compose_prompt, icl_block, record_json, refresh_due, refresh_policy, GroupPair,
    PromptBundle, PromptTemplate, TemplateContext, TemplateId,
};

pub(crate) use inject::{draw_matching, select_from};
