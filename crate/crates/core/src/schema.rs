//! Attribute schemas: named attribute positions with exactly one position
//! flagged as the price.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    id: String,
    attributes: Vec<String>,
    price_index: usize,
}

impl AttributeSchema {
    pub fn new(
        id: impl Into<String>,
        attributes: Vec<String>,
        price_index: usize,
    ) -> Result<Arc<Self>> {
        if attributes.is_empty() {
            return Err(Error::schema("schema needs at least one attribute"));
        }
        if price_index >= attributes.len() {
            return Err(Error::schema(format!(
                "price index {price_index} out of range for {} attributes",
                attributes.len()
            )));
        }
        for (i, a) in attributes.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::schema(format!("attribute {i} has an empty name")));
            }
            if attributes[..i].contains(a) {
                return Err(Error::schema(format!("duplicate attribute name `{a}`")));
            }
        }
        Ok(Arc::new(Self { id: id.into(), attributes, price_index }))
    }

    /// The virtual-traveling schema: four technical indicators plus price.
    pub fn virtual_traveling() -> Arc<Self> {
        Self::new(
            "virtual-traveling",
            ["sensing", "rate", "latency", "comfort", "price"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            4,
        )
        .expect("built-in schema is valid")
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn price_index(&self) -> usize {
        self.price_index
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    /// Names of the non-price attributes, in schema order.
    pub fn indicator_names(&self) -> impl Iterator<Item = (usize, &str)> {
        self.attributes
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.price_index)
            .map(|(i, s)| (i, s.as_str()))
    }
}

/// Schema identity: pointer equality fast path, structural equality otherwise.
pub fn same_schema(a: &Arc<AttributeSchema>, b: &Arc<AttributeSchema>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}
