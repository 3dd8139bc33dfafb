use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{world_rng, EnvError, EnvKind, Transition, WorldState};
use crate::Reward;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub name: String,
    pub category: String,
    /// Price band, e.g. "budget" or "premium".
    pub band: String,
    pub price: u32,
    /// option type -> values, e.g. "color" -> ["red", "blue"]
    pub options: BTreeMap<String, Vec<String>>,
}

impl Item {
    fn option_type(&self, value: &str) -> Option<&str> {
        self.options
            .iter()
            .find(|(_, vs)| vs.iter().any(|v| v == value))
            .map(|(t, _)| t.as_str())
    }

    fn option_values(&self) -> Vec<&str> {
        self.options.values().flatten().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Page {
    Search,
    Results(String),
    Item { index: usize, from: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShopState {
    page: Page,
    /// option type -> selected value
    selected: BTreeMap<String, String>,
    /// Seeded listing order of catalog indices.
    listing: Vec<usize>,
    goal_category: String,
    goal_band: String,
    goal_attributes: Vec<String>,
}

const SEARCH_PAGE: &str = "WebShop [search]";

impl Catalog {
    fn categories(&self) -> Vec<&str> {
        let mut c: Vec<&str> = self.items.iter().map(|i| i.category.as_str()).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub(crate) fn reset(
        &self,
        category: &str,
        band: &str,
        attributes: &[String],
        seed: u64,
    ) -> Result<(ShopState, String), EnvError> {
        let item = self
            .items
            .iter()
            .find(|i| i.category == category && i.band == band)
            .ok_or_else(|| EnvError::UnknownGoal(format!("no {band} {category} in catalog")))?;
        for a in attributes {
            if item.option_type(a).is_none() {
                return Err(EnvError::UnknownGoal(format!("`{a}` is not offered for {category}")));
            }
        }
        let mut listing: Vec<usize> = (0..self.items.len()).collect();
        listing.shuffle(&mut world_rng(EnvKind::Shop, seed));
        let state = ShopState {
            page: Page::Search,
            selected: BTreeMap::new(),
            listing,
            goal_category: category.to_string(),
            goal_band: band.to_string(),
            goal_attributes: attributes.to_vec(),
        };
        Ok((state, SEARCH_PAGE.to_string()))
    }

    fn results(&self, s: &ShopState, query: &str) -> Vec<usize> {
        s.listing
            .iter()
            .copied()
            .filter(|&i| self.items[i].category == query)
            .collect()
    }

    fn render(&self, s: &ShopState) -> String {
        match &s.page {
            Page::Search => SEARCH_PAGE.to_string(),
            Page::Results(q) => {
                let mut out = String::from("[back to search] Results:");
                for i in self.results(s, q) {
                    let it = &self.items[i];
                    out.push_str(&format!(" [{}] ${}", it.name, it.price));
                }
                out
            }
            Page::Item { index, .. } => {
                let it = &self.items[*index];
                let mut out = format!("[back to search] [< prev] {} Price: ${} Options:", it.name, it.price);
                for v in it.option_values() {
                    out.push_str(&format!(" [{v}]"));
                }
                if !s.selected.is_empty() {
                    let sel: Vec<&str> = s.selected.values().map(String::as_str).collect();
                    out.push_str(&format!(" Selected: {}", sel.join(", ")));
                }
                out.push_str(" [buy now]");
                out
            }
        }
    }

    pub(crate) fn actions(&self, s: &ShopState) -> Vec<String> {
        match &s.page {
            Page::Search => self.categories().into_iter().map(|c| format!("search {c}")).collect(),
            Page::Results(q) => {
                let mut out = vec!["click back to search".to_string()];
                out.extend(self.results(s, q).into_iter().map(|i| format!("click {}", self.items[i].name)));
                out
            }
            Page::Item { index, .. } => {
                let mut out = vec![
                    "click back to search".to_string(),
                    "click < prev".to_string(),
                    "click buy now".to_string(),
                ];
                out.extend(self.items[*index].option_values().into_iter().map(|v| format!("click {v}")));
                out
            }
        }
    }

    pub(crate) fn all_actions(&self) -> Vec<String> {
        let mut out: Vec<String> = self.categories().into_iter().map(|c| format!("search {c}")).collect();
        out.extend(["click back to search", "click < prev", "click buy now"].map(String::from));
        for it in &self.items {
            out.push(format!("click {}", it.name));
            out.extend(it.option_values().into_iter().map(|v| format!("click {v}")));
        }
        out.sort();
        out.dedup();
        out
    }

    fn score(&self, s: &ShopState, index: usize) -> Reward {
        let it = &self.items[index];
        let total = 2 + s.goal_attributes.len() as i64;
        let mut matched = 0i64;
        matched += i64::from(it.category == s.goal_category);
        matched += i64::from(it.band == s.goal_band);
        for a in &s.goal_attributes {
            matched += i64::from(s.selected.values().any(|v| v == a));
        }
        Reward::new(matched, total)
    }

    pub(crate) fn step(&self, s: &ShopState, action: &str) -> Option<Transition> {
        if !self.actions(s).iter().any(|a| a == action) {
            return None;
        }
        let mut next = s.clone();
        let mut terminal = None;
        match (&s.page, action) {
            (Page::Search, a) => {
                next.page = Page::Results(a.strip_prefix("search ")?.to_string());
            }
            (_, "click back to search") => {
                next.page = Page::Search;
                next.selected.clear();
            }
            (Page::Results(q), a) => {
                let name = a.strip_prefix("click ")?;
                let index = self.items.iter().position(|i| i.name == name)?;
                next.page = Page::Item { index, from: q.clone() };
                next.selected.clear();
            }
            (Page::Item { from, .. }, "click < prev") => {
                next.page = Page::Results(from.clone());
                next.selected.clear();
            }
            (Page::Item { index, .. }, "click buy now") => {
                terminal = Some(self.score(s, *index));
            }
            (Page::Item { index, .. }, a) => {
                let value = a.strip_prefix("click ")?;
                let ty = self.items[*index].option_type(value)?;
                next.selected.insert(ty.to_string(), value.to_string());
            }
        }
        let observation = if terminal.is_some() {
            "Thank you for shopping with us!".to_string()
        } else {
            self.render(&next)
        };
        Some(Transition {
            world: WorldState::Shop(next),
            observation,
            terminal,
        })
    }
}
