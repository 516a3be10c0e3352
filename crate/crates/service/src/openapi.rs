use serde_json::{json, Value};

/// OpenAPI 3 description of the JSON API.
pub fn document() -> Value {
    let box_schema = json!({
        "type": "object",
        "required": ["class", "i_min", "j_min", "i_max", "j_max"],
        "properties": {
            "class": {"type": "integer", "minimum": 2, "description": "defect class id (1 is background)"},
            "i_min": {"type": "integer", "minimum": 0},
            "j_min": {"type": "integer", "minimum": 0},
            "i_max": {"type": "integer", "minimum": 0, "description": "inclusive row"},
            "j_max": {"type": "integer", "minimum": 0, "description": "inclusive column"}
        }
    });
    let error = json!({"$ref": "#/components/schemas/Error"});
    json!({
        "openapi": "3.0.3",
        "info": {"title": "boxforge generation service", "version": env!("CARGO_PKG_VERSION")},
        "paths": {
            "/api/generate": {"post": {
                "summary": "Queue a generation job for a box layout",
                "requestBody": {"required": true, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/GenerateRequest"}}}},
                "responses": {
                    "202": {"description": "queued", "content": {"application/json": {"schema": {
                        "type": "object", "required": ["job_id"], "properties": {"job_id": {"type": "string"}}}}}},
                    "400": {"description": "validation failure; `fields` names each offending field such as `boxes[2]`", "content": {"application/json": {"schema": error}}},
                    "503": {"description": "queue full", "content": {"application/json": {"schema": error}}}
                }
            }},
            "/api/jobs/{id}": {"get": {
                "summary": "Job status and, once done, its result",
                "parameters": [{"name": "id", "in": "path", "required": true, "schema": {"type": "string"}}],
                "responses": {
                    "200": {"description": "job", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/GenerationJob"}}}},
                    "404": {"description": "unknown id", "content": {"application/json": {"schema": error}}}
                }
            }},
            "/api/meta": {"get": {
                "summary": "Class alphabet, size limits and checkpoint description",
                "responses": {"200": {"description": "metadata", "content": {"application/json": {"schema": {"type": "object"}}}}}
            }},
            "/api/spec": {"get": {"summary": "This document", "responses": {"200": {"description": "OpenAPI document"}}}}
        },
        "components": {"schemas": {
            "Box": box_schema,
            "GenerateRequest": {
                "type": "object",
                "required": ["height", "width", "boxes"],
                "properties": {
                    "height": {"type": "integer", "minimum": 1},
                    "width": {"type": "integer", "minimum": 1},
                    "boxes": {"type": "array", "items": {"$ref": "#/components/schemas/Box"}, "description": "order breaks conditioning ties"},
                    "seed": {"type": "integer", "minimum": 0, "default": 0},
                    "steps": {"type": "integer", "minimum": 1, "description": "defaults to the checkpoint's chain length, the only accepted value"}
                }
            },
            "GenerationResult": {
                "type": "object",
                "properties": {
                    "image": {"type": "string", "format": "byte", "description": "RGB PNG"},
                    "mask": {"type": "string", "format": "byte", "description": "palette PNG, value k is class k+1"},
                    "palette": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3}},
                    "sae": {"type": "number", "nullable": true},
                    "ebr": {"type": "number", "nullable": true},
                    "steps": {"type": "integer"},
                    "seed": {"type": "integer"}
                }
            },
            "GenerationJob": {
                "type": "object",
                "properties": {
                    "id": {"type": "string"},
                    "request": {"$ref": "#/components/schemas/GenerateRequest"},
                    "status": {"type": "string", "enum": ["queued", "running", "done", "failed"]},
                    "result": {"allOf": [{"$ref": "#/components/schemas/GenerationResult"}], "nullable": true},
                    "error": {"type": "string", "nullable": true},
                    "created_ms": {"type": "integer"},
                    "started_ms": {"type": "integer", "nullable": true},
                    "finished_ms": {"type": "integer", "nullable": true}
                }
            },
            "Error": {
                "type": "object",
                "required": ["error"],
                "properties": {
                    "error": {"type": "string"},
                    "fields": {"type": "array", "items": {"type": "object", "properties": {
                        "field": {"type": "string"}, "message": {"type": "string"}}}}
                }
            }
        }}
    })
}
