mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use kbqa_core::{HttpLlmClient, LlmClient, LlmConfig, PromptTemplate};
use kbqa_gateway::api::{ask_payload, error_payload, DatasetInfo};
use kbqa_gateway::{
    AskRequest, AskResponse, DatasetDescriptor, ErrorBody, GatewayError, Registry, ServerHandle,
};

use crate::config::{CliConfig, DEFAULT_BIND};

#[derive(Debug, Parser)]
#[command(name = "kbqa", version, about = "Question answering over knowledge bases")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra dataset descriptor file (repeatable).
    #[arg(long = "descriptor", global = true)]
    descriptors: Vec<PathBuf>,
    /// Talk to a running gateway instead of loading datasets locally.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Print responses as JSON (the HTTP payloads).
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Register dataset descriptors (locally: load and validate them).
    Load { files: Vec<PathBuf> },
    /// Ask a question.
    Ask(AskArgs),
    /// Print triple, entity and predicate counts of a dataset.
    Stats {
        #[arg(long)]
        dataset: String,
    },
    /// List registered datasets.
    Datasets,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    bind: Option<String>,
    /// Chat-completion endpoint for the LLM stage.
    #[arg(long)]
    llm_url: Option<String>,
}

#[derive(Debug, Args)]
struct AskArgs {
    #[arg(long)]
    dataset: String,
    /// Include the pipeline trace.
    #[arg(long)]
    trace: bool,
    /// CoNLL-U parse of the question.
    #[arg(long)]
    conllu: Option<PathBuf>,
    /// Override the dataset's linking threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Override the dataset's number of candidate queries.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    llm_url: Option<String>,
    question: Vec<String>,
}

struct Failure {
    code: String,
    message: String,
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure { code: "ERROR".into(), message: e.to_string() }
            }
        }
    )*};
}

failure_from!(String, &str, std::io::Error, serde_json::Error, ureq::Error);

impl From<GatewayError> for Failure {
    fn from(e: GatewayError) -> Self {
        Failure {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

fn llm_from(config: &CliConfig, url: Option<&str>) -> Option<Arc<dyn LlmClient>> {
    let llm = match (url, &config.llm) {
        (Some(url), Some(base)) => Some(LlmConfig {
            url: url.to_string(),
            ..base.clone()
        }),
        (Some(url), None) => Some(LlmConfig::new(url)),
        (None, base) => base.clone(),
    };
    llm.map(|c| Arc::new(HttpLlmClient::new(c)) as Arc<dyn LlmClient>)
}

fn template_from(config: &CliConfig) -> Result<PromptTemplate, Failure> {
    match &config.prompt_template {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            Ok(PromptTemplate::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?)
        }
        None => Ok(PromptTemplate::default()),
    }
}

fn descriptor_files(cli: &Cli, config: &CliConfig) -> Vec<PathBuf> {
    config.datasets.iter().chain(&cli.descriptors).cloned().collect()
}

/// A registry holding every configured dataset, with optional per-dataset
/// overrides applied.
fn local_registry(
    cli: &Cli,
    config: &CliConfig,
    llm_url: Option<&str>,
    tweak: impl Fn(&mut DatasetDescriptor),
) -> Result<Registry, Failure> {
    let registry = Registry::new(llm_from(config, llm_url), template_from(config)?);
    for path in descriptor_files(cli, config) {
        let mut descriptor = DatasetDescriptor::from_path(&path)?;
        tweak(&mut descriptor);
        registry.register(descriptor)?;
    }
    Ok(registry)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn term_text(term: &kbqa_core::Term) -> String {
    match term {
        kbqa_core::Term::Literal(s) => s.clone(),
        other => other.to_string(),
    }
}

fn print_answer(response: &AskResponse) {
    println!("stage: {}", response.stage);
    println!("verified: {}", response.verified);
    if let Some(sparql) = &response.sparql {
        println!("query:\n{sparql}");
    }
    if let Some(score) = response.score {
        println!("score: {score:.4}");
    }
    if let Some(truth) = response.boolean {
        println!("answer: {truth}");
    }
    if let Some(rows) = &response.rows {
        if let Some(columns) = &response.columns {
            println!("{}", columns.join("\t"));
        }
        for row in rows {
            println!("{}", row.iter().map(term_text).collect::<Vec<_>>().join("\t"));
        }
    }
    if let Some(text) = &response.llm_text {
        println!("(unverified: not from the knowledge base)\n{text}");
    }
    if let Some(error) = &response.error {
        println!("error: {} {}", error.code, error.message);
    }
    if let Some(trace) = &response.trace {
        println!("trace:");
        print_json(trace);
    }
}

/// Prints an ask payload; returns the exit code.
fn render_ask_payload(status: u16, body: serde_json::Value, json: bool) -> Result<u8, Failure> {
    if json {
        print_json(&body);
    } else if status < 400 || body.get("stage").is_some() {
        print_answer(&serde_json::from_value(body)?);
    } else {
        let error: ErrorBody = serde_json::from_value(body)?;
        eprintln!("error: {}: {}", error.error.code, error.error.message);
        if let Some(trace) = error.trace {
            println!("trace:");
            print_json(&trace);
        }
    }
    Ok(if status < 400 { 0 } else { 2 })
}

fn agent() -> ureq::Agent {
    ureq::Agent::new_with_config(
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build(),
    )
}

fn http_json(
    method: &str,
    url: &str,
    body: Option<&serde_json::Value>,
) -> Result<(u16, serde_json::Value), Failure> {
    let agent = agent();
    let mut response = match (method, body) {
        ("POST", Some(body)) => agent.post(url).send_json(body)?,
        ("POST", None) => agent.post(url).send_empty()?,
        _ => agent.get(url).call()?,
    };
    let status = response.status().as_u16();
    let value = response.body_mut().read_json()?;
    Ok((status, value))
}

fn ask(cli: &Cli, config: &CliConfig, args: &AskArgs) -> Result<u8, Failure> {
    let question = args.question.join(" ");
    if question.trim().is_empty() {
        return Err("no question given".into());
    }
    let conllu = match &args.conllu {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?),
        None => None,
    };
    if let Some(endpoint) = cli.endpoint.as_ref().or(config.endpoint.as_ref()) {
        let request = AskRequest {
            dataset: args.dataset.clone(),
            question,
            trace: args.trace,
            conllu,
        };
        let (status, body) = http_json(
            "POST",
            &format!("{}/ask", endpoint.trim_end_matches('/')),
            Some(&serde_json::to_value(request)?),
        )?;
        return render_ask_payload(status, body, cli.json);
    }
    let registry = local_registry(cli, config, args.llm_url.as_deref(), |d| {
        if d.dataset_id == args.dataset {
            if let Some(t) = args.threshold {
                d.threshold = t;
            }
            if let Some(k) = args.k {
                d.k = k;
            }
        }
    })?;
    let result = registry.ask(&args.dataset, &question, conllu.as_deref());
    let (status, body) = ask_payload(result, args.trace);
    render_ask_payload(status, body, cli.json)
}

fn print_stats(info: &DatasetInfo, json: bool) {
    if json {
        print_json(info);
    } else {
        println!("Dataset\tTriples\tEntities\tPredicates");
        println!(
            "{}\t{}\t{}\t{}",
            info.dataset_id, info.stats.triples, info.stats.entities, info.stats.predicates
        );
    }
}

fn datasets_from(cli: &Cli, config: &CliConfig) -> Result<Vec<DatasetInfo>, Failure> {
    if let Some(endpoint) = cli.endpoint.as_ref().or(config.endpoint.as_ref()) {
        let (status, body) = http_json("GET", &format!("{}/datasets", endpoint.trim_end_matches('/')), None)?;
        if status >= 400 {
            return Err(body.to_string().into());
        }
        return Ok(serde_json::from_value(body)?);
    }
    Ok(local_registry(cli, config, None, |_| {})?.list())
}

fn report_error(json: bool, code: &str, message: &str) {
    if json {
        print_json(&ErrorBody::new(code, message));
    } else {
        eprintln!("error: {code}: {message}");
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let config = match &cli.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    match &cli.command {
        Command::Serve(args) => {
            let registry = Arc::new(local_registry(cli, &config, args.llm_url.as_deref(), |_| {})?);
            let bind = args
                .bind
                .clone()
                .or(config.bind.clone())
                .unwrap_or_else(|| DEFAULT_BIND.to_string());
            let handle = ServerHandle::spawn(&bind, kbqa_gateway::router(registry.clone()))?;
            eprintln!(
                "listening on {} with {} dataset(s)",
                handle.url(),
                registry.list().len()
            );
            handle.shutdown_on(kbqa_gateway::server::ctrl_c())?;
            Ok(0)
        }
        Command::Load { files } => {
            if files.is_empty() {
                return Err("no descriptor files given".into());
            }
            if let Some(endpoint) = cli.endpoint.as_ref().or(config.endpoint.as_ref()) {
                let mut code = 0;
                for file in files {
                    let descriptor = DatasetDescriptor::from_path(file)?;
                    let (status, body) = http_json(
                        "POST",
                        &format!("{}/datasets", endpoint.trim_end_matches('/')),
                        Some(&serde_json::to_value(descriptor)?),
                    )?;
                    if cli.json {
                        print_json(&body);
                    } else if status < 400 {
                        println!("registered {}", body["dataset_id"].as_str().unwrap_or_default());
                    } else {
                        eprintln!("error: {}: {}", body["error"]["code"], body["error"]["message"]);
                    }
                    if status >= 400 {
                        code = 2;
                    }
                }
                return Ok(code);
            }
            let registry = local_registry(cli, &config, None, |_| {})?;
            for file in files {
                let descriptor = DatasetDescriptor::from_path(file)?;
                match registry.register(descriptor) {
                    Ok(id) => {
                        let info = registry.get(&id)?.info();
                        if cli.json {
                            print_json(&info);
                        } else {
                            println!("loaded {id}");
                        }
                    }
                    Err(e) => {
                        let (_, body) = error_payload(&e, false);
                        let body: ErrorBody = serde_json::from_value(body)?;
                        report_error(cli.json, &body.error.code, &body.error.message);
                        return Ok(2);
                    }
                }
            }
            Ok(0)
        }
        Command::Ask(args) => ask(cli, &config, args),
        Command::Stats { dataset } => {
            let infos = datasets_from(cli, &config)?;
            match infos.iter().find(|i| &i.dataset_id == dataset) {
                Some(info) => {
                    print_stats(info, cli.json);
                    Ok(0)
                }
                None => {
                    report_error(
                        cli.json,
                        "DATASET_NOT_FOUND",
                        &format!("dataset {dataset:?} is not registered"),
                    );
                    Ok(2)
                }
            }
        }
        Command::Datasets => {
            let infos = datasets_from(cli, &config)?;
            if cli.json {
                print_json(&infos);
            } else {
                println!("Dataset\tName\tLanguage\tTriples\tEntities\tPredicates");
                for i in &infos {
                    println!(
                        "{}\t{}\t{}\t{}\t{}\t{}",
                        i.dataset_id, i.name, i.language, i.stats.triples, i.stats.entities, i.stats.predicates
                    );
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            report_error(cli.json, &failure.code, &failure.message);
            ExitCode::from(2)
        }
    }
}
