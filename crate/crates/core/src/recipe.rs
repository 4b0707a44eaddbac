//! Recipes: a JSON list of repair actions replayed against an input file.
//!
//! ```json
//! {"format_version": 1, "actions": [{"action": "convert_cells", "cells": [{"row": 3, "column": "Income"}]}]}
//! ```
//!
//! Row indices are version-local: each action sees the table as left by the
//! actions before it.

use serde::{Deserialize, Serialize};

use crate::anomaly::DetectorConfig;
use crate::error::Error;
use crate::groups::GroupSpec;
use crate::repair::RepairAction;
use crate::session::{Extensions, Session};
use crate::table::CsvOptions;

pub const RECIPE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub actions: Vec<RepairAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_options: Option<CsvOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<DetectorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specs: Option<Vec<GroupSpec>>,
}

fn format_version() -> u32 {
    RECIPE_FORMAT_VERSION
}

/// Schema check only; actions are validated when applied.
pub fn parse_recipe(bytes: &[u8]) -> Result<Recipe, String> {
    let recipe: Recipe = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    if recipe.format_version != RECIPE_FORMAT_VERSION {
        return Err(format!(
            "unsupported format_version {} (expected {RECIPE_FORMAT_VERSION})",
            recipe.format_version
        ));
    }
    Ok(recipe)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecipeError {
    /// Loading the input failed before any action ran.
    Load(Error),
    /// Action at this position failed.
    Action(usize, Error),
}

impl std::fmt::Display for RecipeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecipeError::Load(e) => write!(f, "{e}"),
            RecipeError::Action(i, e) => write!(f, "action {i} failed: {e}"),
        }
    }
}

/// Loads `input` and commits every action in order.
pub fn apply_recipe(input: &[u8], name: &str, recipe: &Recipe, extensions: Extensions) -> Result<Session, RecipeError> {
    let mut session = Session::from_csv(
        input,
        name,
        recipe.csv_options.clone().unwrap_or_default(),
        recipe.config.clone().unwrap_or_default(),
        recipe.specs.clone(),
        extensions,
    )
    .map_err(RecipeError::Load)?;
    for (i, action) in recipe.actions.iter().enumerate() {
        session
            .commit(action.clone())
            .map_err(|e| RecipeError::Action(i, e))?;
    }
    Ok(session)
}
