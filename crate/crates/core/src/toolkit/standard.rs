//! The agent-facing tool set: names, parameter schemas and handlers bound to
//! the data lake, the literature corpus and the code sandboxes.

use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::{
    Attachment, AttachmentKind, ParamSpec, ParamType, Runtime, SandboxError, ToolContext,
    ToolDescriptor, ToolFailure, ToolHandler, ToolOutput, ToolRegistry,
};
use crate::lake::{name_matches_markdown, DataLake};
use crate::llm::ChatProvider;
use crate::rag::{retrieve, synthesize, Corpus, LiteratureQuery, SectionLabel};
use crate::table::markdown_table;

pub const DELEGATION_TASK_DESCRIPTION: &str =
    "A concise high-level description of the assigned task.";

pub const LITERATURE_TOOLS: &[&str] = &["search_literature"];
pub const DATABASE_TOOLS: &[&str] = &[
    "sql_list_table",
    "sql_get_schema",
    "sql_query",
    "name_search",
];
pub const ANALYTICS_TOOLS: &[&str] = &["python", "r", "julia"];
pub const DELEGATION_TOOLS: &[&str] = &[
    "literature_specialist",
    "database_specialist",
    "analytics_specialist",
];

fn asset(name: &str) -> &'static str {
    match name {
        "search_literature" => include_str!("../../assets/tools/search_literature.txt"),
        "sql_list_table" => include_str!("../../assets/tools/sql_list_table.txt"),
        "sql_get_schema" => include_str!("../../assets/tools/sql_get_schema.txt"),
        "sql_query" => include_str!("../../assets/tools/sql_query.txt"),
        "name_search" => include_str!("../../assets/tools/name_search.txt"),
        "python" => include_str!("../../assets/tools/python.txt"),
        "r" => include_str!("../../assets/tools/r.txt"),
        "julia" => include_str!("../../assets/tools/julia.txt"),
        "literature_specialist" => include_str!("../../assets/tools/literature_specialist.txt"),
        "database_specialist" => include_str!("../../assets/tools/database_specialist.txt"),
        "analytics_specialist" => include_str!("../../assets/tools/analytics_specialist.txt"),
        other => panic!("no description asset for `{other}`"),
    }
}

fn descriptor(name: &str) -> ToolDescriptor {
    ToolDescriptor::new(name, asset(name).trim_end())
}

pub fn search_literature_descriptor() -> ToolDescriptor {
    let sections: Vec<&str> = SectionLabel::LABELS.iter().map(|l| l.as_str()).collect();
    descriptor("search_literature")
        .param(ParamSpec::required(
            "query",
            ParamType::String,
            "The search query to find relevant papers and sections in the SciSci literature",
        ))
        .param(
            ParamSpec::optional(
                "k",
                ParamType::Integer,
                "A larger value provides more results",
                json!(10),
            )
            .at_least(1),
        )
        .param(
            ParamSpec::required(
                "section",
                ParamType::String,
                "Filter results to only of a specific section (All for all sections)",
            )
            .one_of(&sections),
        )
}

pub fn database_descriptors() -> Vec<ToolDescriptor> {
    vec![
        descriptor("sql_list_table").param(ParamSpec::optional(
            "query",
            ParamType::String,
            "An empty string.",
            json!(""),
        )),
        descriptor("sql_get_schema").param(ParamSpec::optional(
            "query",
            ParamType::String,
            "A list of table names separated by commas. For example, `table1, table2, table3`.",
            json!(""),
        )),
        descriptor("sql_query")
            .param(ParamSpec::required(
                "query",
                ParamType::String,
                "A valid SQL query compatible with Google BigQuery dialect.",
            ))
            .param(
                ParamSpec::optional(
                    "display_rows",
                    ParamType::Integer,
                    "The number of rows to display in the preview.",
                    json!(10),
                )
                .at_least(1),
            ),
        descriptor("name_search")
            .param(
                ParamSpec::required(
                    "column",
                    ParamType::String,
                    "Specifies the database column to search within. Current valid options only include field_name and institution_name.",
                )
                .one_of(&["field_name", "institution_name"]),
            )
            .param(ParamSpec::required(
                "value",
                ParamType::String,
                "Defines the name to search for within the specified column.",
            )),
    ]
}

pub fn sandbox_descriptor(runtime: Runtime) -> ToolDescriptor {
    let what = match runtime {
        Runtime::Python => "Python code snippet to run",
        Runtime::R => "R code snippet to run",
        Runtime::Julia => "Julia code snippet to run",
    };
    descriptor(runtime.as_str()).param(ParamSpec::required("query", ParamType::String, what))
}

/// The three specialist-delegation tools offered to the manager. They are
/// intercepted by the orchestrator rather than dispatched.
pub fn delegation_tools() -> Vec<ToolDescriptor> {
    DELEGATION_TOOLS
        .iter()
        .map(|name| {
            descriptor(name).param(ParamSpec::required(
                "task",
                ParamType::String,
                DELEGATION_TASK_DESCRIPTION,
            ))
        })
        .collect()
}

fn arg_str<'a>(args: &'a Map<String, Value>, name: &str) -> &'a str {
    args.get(name).and_then(Value::as_str).unwrap_or_default()
}

fn arg_usize(args: &Map<String, Value>, name: &str) -> usize {
    args.get(name).and_then(Value::as_u64).unwrap_or_default() as usize
}

pub fn literature_tools(
    corpus: Arc<Corpus>,
    provider: Option<Arc<dyn ChatProvider>>,
) -> Vec<(ToolDescriptor, ToolHandler)> {
    let handler: ToolHandler = Box::new(move |args, _ctx| {
        let section: SectionLabel = arg_str(args, "section").parse().map_err(ToolFailure::new)?;
        let q = LiteratureQuery::new(arg_str(args, "query"))
            .k(arg_usize(args, "k"))
            .section(section);
        let provider = provider.as_deref();
        let found = retrieve(&corpus, &q, provider).map_err(ToolFailure::new)?;
        let synthesis = synthesize(&q.query, &found.hits, provider).map_err(ToolFailure::new)?;
        let mut text = synthesis.render();
        if !found.hits.is_empty() {
            text.push_str("\n\nRetrieved passages:\n");
            for (i, h) in found.hits.iter().enumerate() {
                text.push_str(&format!(
                    "{}. {} ({}), {}, similarity {:.4}: \"{}\"\n",
                    i + 1,
                    h.chunk.paper_title,
                    h.chunk.year,
                    h.chunk.section,
                    h.similarity,
                    h.chunk.summary
                ));
            }
        }
        Ok(ToolOutput::text(text))
    });
    vec![(search_literature_descriptor(), handler)]
}

pub fn database_tools(lake: Arc<DataLake>) -> Vec<(ToolDescriptor, ToolHandler)> {
    let mut descriptors = database_descriptors().into_iter();
    let mut next = || descriptors.next().expect("four database descriptors");

    let l = Arc::clone(&lake);
    let list: ToolHandler = Box::new(move |_args, _ctx| {
        let rows: Vec<Vec<String>> = l
            .list_tables()
            .into_iter()
            .map(|(n, d)| vec![n.to_string(), d.to_string()])
            .collect();
        let columns = ["TableName".to_string(), "TableDescription".to_string()];
        Ok(ToolOutput::text(markdown_table(
            &columns,
            &rows,
            rows.len(),
        )))
    });

    let l = Arc::clone(&lake);
    let schema: ToolHandler = Box::new(move |args, _ctx| {
        l.get_schema(arg_str(args, "query"))
            .map(ToolOutput::text)
            .map_err(ToolFailure::new)
    });

    let l = Arc::clone(&lake);
    let query: ToolHandler = Box::new(move |args, ctx: &mut ToolContext<'_>| {
        let r = l
            .run_query(
                arg_str(args, "query"),
                arg_usize(args, "display_rows"),
                ctx.artifacts,
            )
            .map_err(ToolFailure::new)?;
        let text = format!(
            "{}\n\nThe complete result is stored in: {}",
            r.to_markdown(),
            r.artifact
        );
        Ok(ToolOutput {
            text,
            attachments: vec![Attachment {
                kind: AttachmentKind::File,
                reference: r.artifact,
                media_type: "text/csv".into(),
            }],
        })
    });

    let l = lake;
    let names: ToolHandler = Box::new(move |args, _ctx| {
        let matches = l
            .name_search(arg_str(args, "column"), arg_str(args, "value"))
            .map_err(ToolFailure::new)?;
        Ok(ToolOutput::text(name_matches_markdown(&matches)))
    });

    vec![
        (next(), list),
        (next(), schema),
        (next(), query),
        (next(), names),
    ]
}

/// Sandbox tools; `julia` only when its backend is configured.
pub fn analytics_tools(julia: bool) -> Vec<(ToolDescriptor, ToolHandler)> {
    let mut runtimes = vec![Runtime::Python, Runtime::R];
    if julia {
        runtimes.push(Runtime::Julia);
    }
    runtimes
        .into_iter()
        .map(|runtime| {
            let handler: ToolHandler = Box::new(move |args, ctx: &mut ToolContext<'_>| {
                let result = ctx
                    .sandboxes
                    .exec(runtime, arg_str(args, "query"), ctx.artifacts)
                    .map_err(|e| match e {
                        SandboxError::Unavailable { .. } => {
                            ToolFailure::new(format!("runtime unavailable: {e}"))
                        }
                        other => ToolFailure::new(other),
                    })?;
                if result.ok {
                    Ok(ToolOutput {
                        text: result.text,
                        attachments: result.attachments,
                    })
                } else {
                    Err(ToolFailure {
                        text: result.text,
                        error: result.error.unwrap_or_default(),
                    })
                }
            });
            (sandbox_descriptor(runtime), handler)
        })
        .collect()
}

/// Everything a full registry needs.
#[derive(Clone)]
pub struct StandardTools {
    pub lake: Arc<DataLake>,
    pub corpus: Arc<Corpus>,
    pub rag_provider: Option<Arc<dyn ChatProvider>>,
    pub julia: bool,
}

impl StandardTools {
    pub fn registry(&self) -> ToolRegistry {
        let mut reg = ToolRegistry::new();
        let all = literature_tools(Arc::clone(&self.corpus), self.rag_provider.clone())
            .into_iter()
            .chain(database_tools(Arc::clone(&self.lake)))
            .chain(analytics_tools(self.julia));
        for (d, h) in all {
            reg.register(d, h)
                .expect("standard tool names are distinct");
        }
        reg
    }
}
