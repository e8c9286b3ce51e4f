use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Serialize;
use serde_json::Value as Json;
use thiserror::Error;

use super::parse::byte_offset;
use crate::value::Literal;

/// Flat item record: field name to scalar literal.
pub type Item = BTreeMap<String, Literal>;

/// Structured item data rendered by an environment (collections of items).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DataCatalog {
    pub collections: BTreeMap<String, Vec<Item>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("malformed catalog at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate item id `{id}` in collection `{collection}`")]
    DuplicateId { collection: String, id: String },
}

impl DataCatalog {
    pub fn collection(&self, name: &str) -> &[Item] {
        self.collections.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Values of `field` across `collection`, in item order.
    pub fn field_values(&self, collection: &str, field: &str) -> Vec<Literal> {
        self.collection(collection)
            .iter()
            .filter_map(|item| item.get(field).cloned())
            .collect()
    }

    /// First collection (by name) whose items carry `field`.
    pub fn collection_with_field(&self, field: &str) -> Option<&str> {
        self.collections
            .iter()
            .find(|(_, items)| items.iter().any(|i| i.contains_key(field)))
            .map(|(k, _)| k.as_str())
    }

    /// Locates an item by id: (collection, 1-based position, item).
    pub fn find_item(&self, id: &Literal) -> Option<(&str, usize, &Item)> {
        for (name, items) in &self.collections {
            if let Some(pos) = items.iter().position(|i| i.get("id") == Some(id)) {
                return Some((name.as_str(), pos + 1, &items[pos]));
            }
        }
        None
    }
}

/// Loads a catalog document: an object mapping collection names to arrays
/// of flat item records. A single `state` or `collections` wrapper object
/// (the shape of a front-end data store) is stripped first.
pub fn load_catalog(document: &[u8]) -> Result<DataCatalog, CatalogError> {
    let root: Json = serde_json::from_slice(document).map_err(|e| CatalogError::Malformed {
        offset: byte_offset(document, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut obj = root.as_object().ok_or_else(|| CatalogError::Schema {
        path: String::new(),
        message: "expected an object".into(),
    })?;
    while obj.len() == 1 {
        match obj
            .get("state")
            .or_else(|| obj.get("collections"))
            .and_then(Json::as_object)
        {
            Some(inner) => obj = inner,
            None => break,
        }
    }

    let mut catalog = DataCatalog::default();
    for (name, items) in obj {
        let arr = items.as_array().ok_or_else(|| CatalogError::Schema {
            path: name.clone(),
            message: "expected an array of items".into(),
        })?;
        let mut seen = Vec::new();
        let mut out = Vec::with_capacity(arr.len());
        for (i, raw) in arr.iter().enumerate() {
            let path = format!("{name}[{i}]");
            let fields = raw.as_object().ok_or_else(|| CatalogError::Schema {
                path: path.clone(),
                message: "expected an object".into(),
            })?;
            let mut item = Item::new();
            for (k, v) in fields {
                let lit = Literal::from_json(v).map_err(|e| CatalogError::Schema {
                    path: format!("{path}.{k}"),
                    message: e.to_string(),
                })?;
                item.insert(k.clone(), lit);
            }
            if let Some(id) = item.get("id") {
                if seen.contains(id) {
                    return Err(CatalogError::DuplicateId {
                        collection: name.clone(),
                        id: id.to_string(),
                    });
                }
                seen.push(id.clone());
            }
            out.push(item);
        }
        catalog.collections.insert(name.clone(), out);
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Number;

    #[test]
    fn wrapped_store_is_unwrapped() {
        let doc = br#"{"state": {"providers": [
            {"id": "prov_1", "name": "Dr. Sarah Johnson", "specialty": "Primary Care", "rating": 4.9}
        ]}}"#;
        let cat = load_catalog(doc).unwrap();
        let p = &cat.collection("providers")[0];
        assert_eq!(p["name"], Literal::str("Dr. Sarah Johnson"));
        assert_eq!(p["rating"], Literal::Number(Number::new(4.9).unwrap()));
        assert_eq!(cat.find_item(&Literal::str("prov_1")).unwrap().1, 1);
    }

    #[test]
    fn empty_catalog() {
        assert!(load_catalog(b"{}").unwrap().collections.is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let doc = br#"{"providers": [{"id": "prov_1"}, {"id": "prov_1"}]}"#;
        assert_eq!(
            load_catalog(doc).unwrap_err(),
            CatalogError::DuplicateId {
                collection: "providers".into(),
                id: "prov_1".into()
            }
        );
    }

    #[test]
    fn nested_fields_rejected() {
        assert!(matches!(
            load_catalog(br#"{"c": [{"id": "x", "tags": ["a"]}]}"#),
            Err(CatalogError::Schema { .. })
        ));
    }
}
