//! A minimal OpenAPI 3 document built from the route table.

use serde_json::{json, Map, Value};

use crate::api::{Access, RouteSpec};

fn path_params(path: &str) -> Vec<Value> {
    path.split('/')
        .filter_map(|seg| seg.strip_prefix('{')?.strip_suffix('}'))
        .map(|name| {
            json!({
                "name": name,
                "in": "path",
                "required": true,
                "schema": { "type": "string" },
            })
        })
        .collect()
}

pub fn document(routes: &[RouteSpec]) -> Value {
    let mut paths = Map::new();
    for r in routes {
        let mut op = json!({
            "summary": r.summary,
            "x-session": r.access,
            "parameters": path_params(r.path),
            "responses": {
                "default": {
                    "description": "JSON body, or {code, message, details} on error",
                },
            },
        });
        if r.access != Access::Public {
            op["security"] = json!([{ "session": [] }]);
        }
        let entry = paths
            .entry(r.path.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        entry[r.method.to_ascii_lowercase()] = op;
    }
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "Discourse sandbox API",
            "version": env!("CARGO_PKG_VERSION"),
        },
        "components": {
            "securitySchemes": {
                "session": { "type": "http", "scheme": "bearer" },
            },
        },
        "paths": paths,
    })
}
