//! Scripted front end: a small procedural command language that drives the
//! whole check → load → compile → initialise → distribute → update →
//! summarise workflow from a text file.
//!
//! A script is newline-separated commands of the form `verb(arg, ...)`.
//! Arguments are integers, quoted strings (single or double quotes) or bare
//! words; `#` starts a comment. File arguments are resolved relative to the
//! script's own directory so a fixture directory is self-contained.
//!
//! ```text
//! modelCheck('model.bug')       # parse the model
//! modelData('data.txt')        # load observations (repeatable)
//! modelCompile(2)              # build the graph for two chains
//! modelInits('inits1.txt', 1)  # starting point for chain 1
//! modelGenInits()              # draw anything still missing from the priors
//! modelDistribute(8)           # spread the two chains over eight cores
//! modelUpdate(1000)            # burn-in
//! samplesSet('alpha0')         # monitor a node (or a whole array)
//! modelUpdate(10000)           # retained updates
//! samplesStats()               # summary table
//! infoDistribution()           # show the computation schedule
//! infoGraph()                  # show graph totals
//! ```
//!
//! Commands must arrive in a legal order; a violation aborts the run with a
//! message naming the step that has to happen first. Every command's output
//! is deterministic for a fixed seed (set with `seed(n)` or
//! [`ScriptOptions::seed`]), so re-running a script reproduces its output
//! byte for byte.
//!
//! Adaptive proposal tuning runs until the first `samplesSet`, which freezes
//! all proposal scales; monitored iterations therefore come from a fixed
//! transition kernel. Updates before that point are burn-in. If
//! `modelDistribute` is never called the run uses one core per chain, or the
//! [`ScriptOptions::default_cores`] total when given.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::diagnostics::{format_summary_table, summarise_all, MonitorBuffer, MonitorRecord};
use crate::graph::{mean_children, topological_depth, Dag, NodeId};
use crate::lang::{compile_graph, parse_data, parse_model, DataEnvironment, ModelAst};
use crate::runtime::{resolve_monitors, ChainInit, Engine, EngineConfig};
use crate::schedule::{build_schedule, ScheduleTable};

#[derive(Debug, Error)]
pub enum ScriptError {
    /// The script file itself could not be read.
    #[error("cannot read script `{path}`: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// A line is not a well-formed `verb(args)` command.
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    /// A well-formed command failed: wrong state, bad file, engine error.
    #[error("line {line}: {verb}: {message}")]
    Command { line: usize, verb: String, message: String },
    /// The output sink rejected a write.
    #[error("cannot write command output: {0}")]
    Output(#[from] std::io::Error),
}

/// Defaults a script starts from; individual commands can override them.
#[derive(Debug, Clone)]
pub struct ScriptOptions {
    /// Master seed unless the script calls `seed(n)`.
    pub seed: u64,
    /// Total core count used when the script never calls `modelDistribute`.
    /// `None` means one core per chain.
    pub default_cores: Option<usize>,
    /// Chain count used when `modelCompile` is called without an argument.
    pub default_chains: usize,
    /// Directory for artifacts (summary table, CSV samples, schedule dumps).
    /// `None` writes nothing to disk.
    pub out_dir: Option<PathBuf>,
}

impl Default for ScriptOptions {
    fn default() -> ScriptOptions {
        ScriptOptions { seed: 1, default_cores: None, default_chains: 1, out_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Text(String),
    Int(i64),
}

impl Arg {
    fn describe(&self) -> &'static str {
        match self {
            Arg::Text(_) => "a string",
            Arg::Int(_) => "an integer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Call {
    line: usize,
    verb: String,
    args: Vec<Arg>,
}

fn split_comment(line: &str) -> &str {
    let mut in_quote: Option<char> = None;
    for (i, ch) in line.char_indices() {
        match in_quote {
            Some(q) if ch == q => in_quote = None,
            Some(_) => {}
            None if ch == '\'' || ch == '"' => in_quote = Some(ch),
            None if ch == '#' => return &line[..i],
            None => {}
        }
    }
    line
}

fn parse_call(line_no: usize, text: &str) -> Result<Call, ScriptError> {
    let err = |message: String| ScriptError::Syntax { line: line_no, message };
    let open = text
        .find('(')
        .ok_or_else(|| err(format!("expected `verb(...)`, found `{}`", text.trim())))?;
    let verb = text[..open].trim();
    if verb.is_empty() || !verb.chars().all(|c| c.is_ascii_alphanumeric() || c == '.') {
        return Err(err(format!("`{}` is not a command name", verb)));
    }
    let rest = text[open + 1..].trim_end();
    let body = rest
        .strip_suffix(')')
        .ok_or_else(|| err("missing closing `)`".to_string()))?
        .trim();
    let mut args = Vec::new();
    if !body.is_empty() {
        for piece in body.split(',') {
            let piece = piece.trim();
            if piece.is_empty() {
                return Err(err("empty argument".to_string()));
            }
            let first = piece.chars().next().unwrap();
            if first == '\'' || first == '"' {
                let inner = piece
                    .strip_prefix(first)
                    .and_then(|p| p.strip_suffix(first))
                    .ok_or_else(|| err(format!("unterminated string {}", piece)))?;
                args.push(Arg::Text(inner.to_string()));
            } else if first == '-' || first.is_ascii_digit() {
                let n: i64 = piece
                    .parse()
                    .map_err(|_| err(format!("`{}` is not an integer", piece)))?;
                args.push(Arg::Int(n));
            } else {
                args.push(Arg::Text(piece.to_string()));
            }
        }
    }
    Ok(Call { line: line_no, verb: verb.to_string(), args })
}

fn parse_script(text: &str) -> Result<Vec<Call>, ScriptError> {
    let mut calls = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = split_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        calls.push(parse_call(i + 1, line)?);
    }
    Ok(calls)
}

/// One scripted run: holds the model as it moves through the workflow.
pub struct Session<'w> {
    out: &'w mut dyn Write,
    base: PathBuf,
    out_dir: Option<PathBuf>,
    default_cores: Option<usize>,
    default_chains: usize,
    seed: u64,
    model: Option<ModelAst>,
    data: DataEnvironment,
    dag: Option<Arc<Dag>>,
    chains: usize,
    inits: Vec<BTreeMap<String, f64>>,
    inits_loaded: Vec<bool>,
    gen_inits: bool,
    total_cores: Option<usize>,
    schedule: Option<Arc<ScheduleTable>>,
    engine: Option<Engine>,
    monitor_names: Vec<String>,
    monitor_ids: Vec<NodeId>,
    records: Vec<MonitorRecord>,
    sample_start: Option<u64>,
}

impl<'w> Session<'w> {
    /// `base` is the directory command paths are resolved against.
    pub fn new(base: &Path, opts: &ScriptOptions, out: &'w mut dyn Write) -> Session<'w> {
        Session {
            out,
            base: base.to_path_buf(),
            out_dir: opts.out_dir.clone(),
            default_cores: opts.default_cores,
            default_chains: opts.default_chains.max(1),
            seed: opts.seed,
            model: None,
            data: DataEnvironment::new(),
            dag: None,
            chains: 0,
            inits: Vec::new(),
            inits_loaded: Vec::new(),
            gen_inits: false,
            total_cores: None,
            schedule: None,
            engine: None,
            monitor_names: Vec::new(),
            monitor_ids: Vec::new(),
            records: Vec::new(),
            sample_start: None,
        }
    }

    /// Runs one command line, e.g. `exec("modelUpdate(1000)")`.
    pub fn exec(&mut self, line: &str) -> Result<(), ScriptError> {
        self.exec_call(&parse_call(0, line)?)
    }

    fn exec_call(&mut self, call: &Call) -> Result<(), ScriptError> {
        let result = self.check_arity(call).and_then(|()| match call.verb.as_str() {
            "modelCheck" => self.model_check(call),
            "modelData" => self.model_data(call),
            "modelCompile" => self.model_compile(call),
            "modelInits" => self.model_inits(call),
            "modelGenInits" => self.model_gen_inits(call),
            "modelDistribute" => self.model_distribute(call),
            "modelUpdate" => self.model_update(call),
            "samplesSet" => self.samples_set(call),
            "samplesStats" => self.samples_stats(call),
            "infoDistribution" => self.info_distribution(call),
            "infoGraph" => self.info_graph(call),
            "seed" => self.set_seed(call),
            verb => Err(format!("unknown command `{}`", verb)),
        });
        result.map_err(|message| ScriptError::Command {
            line: call.line,
            verb: call.verb.clone(),
            message,
        })
    }

    fn say(&mut self, text: &str) -> Result<(), String> {
        writeln!(self.out, "{}", text).map_err(|e| format!("cannot write output: {}", e))
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn read_file(&self, path: &str) -> Result<String, String> {
        let full = self.resolve(path);
        fs::read_to_string(&full).map_err(|e| format!("cannot read `{}`: {}", full.display(), e))
    }

    fn write_artifact(&self, name: &str, contents: &str) -> Result<(), String> {
        let Some(dir) = &self.out_dir else { return Ok(()) };
        fs::create_dir_all(dir).map_err(|e| format!("cannot create `{}`: {}", dir.display(), e))?;
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| format!("cannot write `{}`: {}", path.display(), e))
    }

    fn text_arg(&self, call: &Call, index: usize, what: &str) -> Result<String, String> {
        match call.args.get(index) {
            Some(Arg::Text(s)) => Ok(s.clone()),
            Some(other) => {
                Err(format!("argument {} should be {}, not {}", index + 1, what, other.describe()))
            }
            None => Err(format!("missing argument {} ({})", index + 1, what)),
        }
    }

    fn int_arg(&self, call: &Call, index: usize, what: &str) -> Result<i64, String> {
        match call.args.get(index) {
            Some(Arg::Int(n)) => Ok(*n),
            Some(other) => {
                Err(format!("argument {} should be {}, not {}", index + 1, what, other.describe()))
            }
            None => Err(format!("missing argument {} ({})", index + 1, what)),
        }
    }

    /// Surplus arguments are rejected up front so a typo like
    /// `samplesSet('a', 'b')` fails loudly instead of monitoring only `a`.
    fn check_arity(&self, call: &Call) -> Result<(), String> {
        let max = match call.verb.as_str() {
            "modelGenInits" | "samplesStats" | "infoDistribution" | "infoGraph" => 0,
            "modelInits" => 2,
            _ => 1,
        };
        if call.args.len() <= max {
            return Ok(());
        }
        Err(if max == 0 {
            format!("takes no arguments, got {}", call.args.len())
        } else {
            format!(
                "expects at most {} argument{}, got {}",
                max,
                if max == 1 { "" } else { "s" },
                call.args.len()
            )
        })
    }

    fn require_model(&self) -> Result<&ModelAst, String> {
        self.model.as_ref().ok_or_else(|| "a model must be checked (run modelCheck first)".into())
    }

    fn require_dag(&self) -> Result<Arc<Dag>, String> {
        self.dag
            .clone()
            .ok_or_else(|| "the model must be compiled (run modelCompile first)".into())
    }

    fn require_no_engine(&self, doing: &str) -> Result<(), String> {
        if self.engine.is_some() {
            Err(format!("{} once updating has begun; start a fresh script instead", doing))
        } else {
            Ok(())
        }
    }

    fn model_check(&mut self, call: &Call) -> Result<(), String> {
        let path = self.text_arg(call, 0, "the model file")?;
        self.require_no_engine("the model cannot change")?;
        let ast =
            parse_model(&self.read_file(&path)?).map_err(|e| e.to_string())?;
        let (stoch, logical) = ast.relation_counts();
        // A new model resets everything downstream of the parse.
        self.model = Some(ast);
        self.data = DataEnvironment::new();
        self.dag = None;
        self.chains = 0;
        self.inits.clear();
        self.inits_loaded.clear();
        self.gen_inits = false;
        self.total_cores = None;
        self.schedule = None;
        self.monitor_names.clear();
        self.monitor_ids.clear();
        self.say(&format!(
            "model is syntactically correct ({} stochastic and {} logical relations)",
            stoch, logical
        ))
    }

    fn model_data(&mut self, call: &Call) -> Result<(), String> {
        let path = self.text_arg(call, 0, "the data file")?;
        self.require_model()?;
        if self.dag.is_some() {
            return Err("data must be loaded before modelCompile".into());
        }
        let env = parse_data(&self.read_file(&path)?).map_err(|e| e.to_string())?;
        let loaded = env.len();
        self.data.merge(env).map_err(|e| e.to_string())?;
        self.say(&format!("data loaded ({} names)", loaded))
    }

    fn model_compile(&mut self, call: &Call) -> Result<(), String> {
        let chains = if call.args.is_empty() {
            self.default_chains
        } else {
            let n = self.int_arg(call, 0, "the number of chains")?;
            if n < 1 {
                return Err("the number of chains must be at least 1".into());
            }
            n as usize
        };
        let ast = self.require_model()?;
        self.require_no_engine("the model cannot be recompiled")?;
        let dag = compile_graph(ast, &self.data).map_err(|e| e.to_string())?;
        let parameters = dag.parameters().len();
        let observed = dag.observed_count();
        self.dag = Some(Arc::new(dag));
        self.chains = chains;
        self.inits = vec![BTreeMap::new(); chains];
        self.inits_loaded = vec![false; chains];
        self.gen_inits = false;
        self.total_cores = None;
        self.schedule = None;
        self.monitor_names.clear();
        self.monitor_ids.clear();
        self.say(&format!(
            "model compiled for {} chains ({} parameters, {} observed nodes)",
            chains, parameters, observed
        ))
    }

    fn model_inits(&mut self, call: &Call) -> Result<(), String> {
        let path = self.text_arg(call, 0, "the initial-values file")?;
        let dag = self.require_dag()?;
        self.require_no_engine("initial values cannot change")?;
        let chain = if call.args.len() > 1 {
            let n = self.int_arg(call, 1, "the chain number")?;
            if n < 1 || n as usize > self.chains {
                return Err(format!(
                    "chain {} is out of range (the model was compiled for {} chains)",
                    n, self.chains
                ));
            }
            n as usize
        } else {
            // Without an explicit chain the file goes to the first chain that
            // has no initial values yet.
            match self.inits_loaded.iter().position(|&done| !done) {
                Some(i) => i + 1,
                None => {
                    return Err(format!(
                        "all {} chains already have initial values; pass a chain \
                         number to replace one",
                        self.chains
                    ));
                }
            }
        };
        let env = parse_data(&self.read_file(&path)?).map_err(|e| e.to_string())?;
        let slot = &mut self.inits[chain - 1];
        let mut loaded = 0usize;
        for (name, value) in env.named_scalars() {
            let node = dag
                .node_by_name(&name)
                .ok_or_else(|| format!("`{}` is not a node in the model", name))?;
            if !dag.is_parameter(node) {
                return Err(format!("`{}` is not a model parameter", name));
            }
            if slot.insert(name.clone(), value).is_some() {
                return Err(format!("chain {} already has an initial value for `{}`", chain, name));
            }
            loaded += 1;
        }
        self.inits_loaded[chain - 1] = true;
        self.say(&format!("initial values loaded for chain {} ({} nodes)", chain, loaded))
    }

    fn model_gen_inits(&mut self, _call: &Call) -> Result<(), String> {
        self.require_dag()?;
        self.require_no_engine("initial values cannot change")?;
        self.gen_inits = true;
        self.say("initial values for any remaining parameters will be drawn from their priors")
    }

    fn inits_ready(&self) -> bool {
        self.gen_inits || (!self.inits_loaded.is_empty() && self.inits_loaded.iter().all(|&d| d))
    }

    fn model_distribute(&mut self, call: &Call) -> Result<(), String> {
        let dag = self.require_dag()?;
        self.require_no_engine("the distribution cannot change")?;
        let cores = self.int_arg(call, 0, "the total core count")?;
        if cores < 1 {
            return Err("the core count must be at least 1".into());
        }
        let cores = cores as usize;
        if cores % self.chains != 0 {
            return Err(format!(
                "{} cores cannot be split evenly over {} chains",
                cores, self.chains
            ));
        }
        let per_chain = cores / self.chains;
        let table = build_schedule(&dag, per_chain).map_err(|e| e.to_string())?;
        self.schedule = Some(Arc::new(table));
        self.total_cores = Some(cores);
        self.say(&format!(
            "model distributed over {} cores ({} per chain)",
            cores, per_chain
        ))
    }

    /// Applies pending monitors to a live engine. The first application ends
    /// the adaptive phase so retained samples come from a frozen kernel.
    fn apply_monitors(&mut self) -> Result<(), String> {
        let engine = self.engine.as_mut().expect("monitors need a live engine");
        if self.sample_start.is_none() {
            engine.freeze_adaptation().map_err(|e| e.to_string())?;
            self.sample_start = Some(engine.iteration() + 1);
        }
        engine.set_monitors(self.monitor_ids.clone()).map_err(|e| e.to_string())
    }

    fn ensure_engine(&mut self) -> Result<(), String> {
        if self.engine.is_some() {
            return Ok(());
        }
        let dag = self.require_dag()?;
        if !self.inits_ready() {
            return Err(
                "every chain needs initial values (run modelInits for each chain, \
                 or modelGenInits)"
                    .into(),
            );
        }
        let total = match self.total_cores {
            Some(n) => n,
            None => {
                // No modelDistribute: fall back to the configured default.
                let n = self.default_cores.unwrap_or(self.chains);
                if n % self.chains != 0 {
                    return Err(format!(
                        "the default core count {} cannot be split evenly over {} \
                         chains; call modelDistribute",
                        n, self.chains
                    ));
                }
                n
            }
        };
        if self.schedule.is_none() {
            let table = build_schedule(&dag, total / self.chains).map_err(|e| e.to_string())?;
            self.schedule = Some(Arc::new(table));
            self.total_cores = Some(total);
        }
        let mut chain_inits = Vec::with_capacity(self.chains);
        for values in &self.inits {
            chain_inits.push(ChainInit::from_named(&dag, values).map_err(|e| e.to_string())?);
        }
        let cfg =
            EngineConfig { master_seed: self.seed, chains: self.chains, total_cores: total };
        let engine = Engine::new(dag, self.schedule.clone().unwrap(), &chain_inits, &cfg)
            .map_err(|e| e.to_string())?;
        self.engine = Some(engine);
        if !self.monitor_ids.is_empty() {
            self.apply_monitors()?;
        }
        Ok(())
    }

    fn model_update(&mut self, call: &Call) -> Result<(), String> {
        let count = self.int_arg(call, 0, "the update count")?;
        if count < 1 {
            return Err("the update count must be positive".into());
        }
        self.require_dag()?;
        self.ensure_engine()?;
        let record = !self.monitor_ids.is_empty();
        let engine = self.engine.as_mut().unwrap();
        let new = engine.update(count as u64, record).map_err(|e| e.to_string())?;
        self.records.extend(new);
        let done = engine.iteration();
        self.say(&format!("{} updates done ({} iterations in total)", count, done))
    }

    fn samples_set(&mut self, call: &Call) -> Result<(), String> {
        let name = self.text_arg(call, 0, "the node to monitor")?;
        let dag = self.require_dag()?;
        if !self.records.is_empty() {
            return Err(
                "sampling has already produced output; set every monitor before \
                 the first monitored modelUpdate"
                    .into(),
            );
        }
        if self.monitor_names.iter().any(|n| n == &name) {
            return Err(format!("`{}` is already monitored", name));
        }
        let ids = resolve_monitors(&dag, std::slice::from_ref(&name))
            .map_err(|e| e.to_string())?;
        let added = ids.len();
        for id in ids {
            if !self.monitor_ids.contains(&id) {
                self.monitor_ids.push(id);
            }
        }
        self.monitor_names.push(name.clone());
        if self.engine.is_some() {
            self.apply_monitors()?;
        }
        self.say(&format!("monitor set for `{}` ({} nodes)", name, added))
    }

    fn samples_stats(&mut self, _call: &Call) -> Result<(), String> {
        let dag = self.require_dag()?;
        if self.monitor_ids.is_empty() {
            return Err("no monitors are set (run samplesSet first)".into());
        }
        if self.records.is_empty() {
            return Err("no monitored updates have run (run modelUpdate after samplesSet)".into());
        }
        let start = self.sample_start.expect("records imply a sampling start");
        let buffer = MonitorBuffer::from_records(&dag, &self.records, self.chains, start);
        let summaries = summarise_all(&buffer).map_err(|e| e.to_string())?;
        let table = format_summary_table(&summaries);
        self.write_artifact("stats.txt", &table)?;
        self.write_artifact("samples.csv", &buffer.to_csv())?;
        self.say(table.trim_end())
    }

    fn info_distribution(&mut self, _call: &Call) -> Result<(), String> {
        let dag = self.require_dag()?;
        let Some(schedule) = self.schedule.clone() else {
            return Err("the model is not distributed (run modelDistribute first)".into());
        };
        let text = schedule.render_text(&dag);
        let json = schedule.to_json(&dag);
        self.write_artifact("schedule.txt", &text)?;
        self.write_artifact(
            "schedule.json",
            &format!("{:#}\n", json),
        )?;
        self.say(text.trim_end())
    }

    fn info_graph(&mut self, _call: &Call) -> Result<(), String> {
        let dag = self.require_dag()?;
        let depths = topological_depth(&dag);
        let text = format!(
            "graph: {} nodes ({} parameters, {} observed, {} constants)\n\
             mean children per parameter: {:.2}\n\
             deepest parameter depth: {}",
            dag.len(),
            dag.parameters().len(),
            dag.observed_count(),
            dag.constant_count(),
            mean_children(&dag),
            depths.max_param_depth(),
        );
        self.write_artifact("graph.json", &format!("{:#}\n", dag.to_json()))?;
        self.say(&text)
    }

    fn set_seed(&mut self, call: &Call) -> Result<(), String> {
        let n = self.int_arg(call, 0, "the seed")?;
        self.require_no_engine("the seed cannot change")?;
        if n < 0 {
            return Err("the seed must be non-negative".into());
        }
        self.seed = n as u64;
        self.say(&format!("seed set to {}", n))
    }
}

/// Runs a whole script text. `base` resolves relative paths in commands.
pub fn run_script_text(
    text: &str,
    base: &Path,
    opts: &ScriptOptions,
    out: &mut dyn Write,
) -> Result<(), ScriptError> {
    let calls = parse_script(text)?;
    let mut session = Session::new(base, opts, out);
    for call in &calls {
        session.exec_call(call)?;
    }
    Ok(())
}

/// Reads and runs a script file; paths inside the script are relative to the
/// script's directory.
pub fn run_script(
    path: &Path,
    opts: &ScriptOptions,
    out: &mut dyn Write,
) -> Result<(), ScriptError> {
    let text = fs::read_to_string(path).map_err(|source| ScriptError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty());
    run_script_text(&text, base.unwrap_or_else(|| Path::new(".")), opts, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = "model {
  for (i in 1:N) {
    y[i] ~ dnorm(mu, tau)
  }
  mu ~ dnorm(0, 0.001)
  tau <- 1 / pow(sigma, 2)
  sigma ~ dunif(0, 5)
}
";
    const DATA: &str =
        "list(N = 8, y = c(1.1, 0.3, 2.4, 1.7, 0.2, 1.3, 0.8, 1.9))\n";
    const INITS1: &str = "list(mu = 0, sigma = 1)\n";
    const INITS2: &str = "list(mu = 1, sigma = 0.5)\n";

    fn fixture_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("model.bug"), MODEL).unwrap();
        fs::write(dir.path().join("data.txt"), DATA).unwrap();
        fs::write(dir.path().join("inits1.txt"), INITS1).unwrap();
        fs::write(dir.path().join("inits2.txt"), INITS2).unwrap();
        dir
    }

    fn run(dir: &Path, opts: &ScriptOptions, script: &str) -> Result<String, ScriptError> {
        let mut out = Vec::new();
        run_script_text(script, dir, opts, &mut out).map(|()| String::from_utf8(out).unwrap())
    }

    #[test]
    fn commands_parse_with_comments_and_quote_styles() {
        let calls = parse_script(
            "# a comment\n\
             modelCheck('model.bug')  # trailing\n\
             \n\
             modelInits(\"inits1.txt\", 1)\n\
             samplesSet(mu)\n\
             modelGenInits()\n",
        )
        .unwrap();
        assert_eq!(calls.len(), 4);
        assert_eq!(calls[0].verb, "modelCheck");
        assert_eq!(calls[0].args, vec![Arg::Text("model.bug".into())]);
        assert_eq!(calls[1].args, vec![Arg::Text("inits1.txt".into()), Arg::Int(1)]);
        assert_eq!(calls[2].args, vec![Arg::Text("mu".into())]);
        assert_eq!(calls[3].line, 6);
        assert!(calls[3].args.is_empty());

        let err = parse_script("modelUpdate 1000\n").unwrap_err();
        assert!(matches!(err, ScriptError::Syntax { line: 1, .. }), "{}", err);
        let err = parse_script("modelUpdate(1000\n").unwrap_err();
        assert!(err.to_string().contains("closing"), "{}", err);
    }

    #[test]
    fn the_state_machine_names_the_missing_step() {
        let dir = fixture_dir();
        let opts = ScriptOptions::default();
        let fails = [
            ("modelDistribute(4)", "model must be compiled"),
            ("modelData('data.txt')", "model must be checked"),
            ("modelCheck('model.bug')\nmodelUpdate(10)", "model must be compiled"),
            (
                "modelCheck('model.bug')\nmodelData('data.txt')\nmodelCompile(1)\nmodelUpdate(10)",
                "initial values",
            ),
            (
                "modelCheck('model.bug')\nmodelData('data.txt')\nmodelCompile(1)\nsamplesStats()",
                "no monitors are set",
            ),
            (
                "modelCheck('model.bug')\nmodelData('data.txt')\nmodelCompile(1)\n\
                 samplesSet('mu')\nsamplesStats()",
                "no monitored updates",
            ),
            (
                "modelCheck('model.bug')\nmodelData('data.txt')\nmodelCompile(1)\n\
                 infoDistribution()",
                "not distributed",
            ),
            (
                "modelCheck('model.bug')\nmodelData('data.txt')\nmodelCompile(1)\n\
                 modelGenInits()\nmodelUpdate(5)\nseed(7)",
                "seed cannot change",
            ),
            (
                "modelCheck('model.bug')\nmodelData('data.txt')\nmodelCompile(2)\n\
                 modelDistribute(3)",
                "cannot be split evenly",
            ),
            ("frobnicate(3)", "unknown command"),
            ("modelCheck(42)", "should be the model file, not an integer"),
            // surplus arguments fail instead of being silently dropped
            ("samplesSet('mu', 'sigma')", "expects at most 1 argument, got 2"),
            ("samplesStats('mu')", "takes no arguments, got 1"),
        ];
        for (script, needle) in fails {
            let err = run(dir.path(), &opts, script).unwrap_err();
            assert!(
                err.to_string().contains(needle),
                "script {:?} should fail with {:?}, got {:?}",
                script,
                needle,
                err.to_string()
            );
        }
    }

    #[test]
    fn a_full_session_emits_the_summary_and_artifacts() {
        let dir = fixture_dir();
        let out_dir = dir.path().join("out");
        let opts = ScriptOptions { out_dir: Some(out_dir.clone()), ..Default::default() };
        let text = run(
            dir.path(),
            &opts,
            "seed(42)\n\
             modelCheck('model.bug')\n\
             modelData('data.txt')\n\
             modelCompile(2)\n\
             modelInits('inits1.txt', 1)\n\
             modelInits('inits2.txt', 2)\n\
             modelDistribute(4)\n\
             modelUpdate(150)\n\
             samplesSet('mu')\n\
             samplesSet(sigma)\n\
             modelUpdate(250)\n\
             samplesStats()\n\
             infoDistribution()\n\
             infoGraph()\n",
        )
        .unwrap();
        assert!(text.contains("model is syntactically correct (3 stochastic and 1 logical"));
        assert!(text.contains("data loaded (2 names)"));
        assert!(text.contains("model compiled for 2 chains (2 parameters, 8 observed nodes)"));
        assert!(text.contains("initial values loaded for chain 2 (2 nodes)"));
        assert!(text.contains("model distributed over 4 cores (2 per chain)"));
        assert!(text.contains("150 updates done (150 iterations in total)"));
        assert!(text.contains("250 updates done (400 iterations in total)"));
        assert!(text.contains("mean"), "summary header missing:\n{}", text);
        assert!(text.contains("sigma"), "summary row missing:\n{}", text);
        assert!(text.contains("graph: 15 nodes (2 parameters, 8 observed, 5 constants)"));
        for artifact in ["stats.txt", "samples.csv", "schedule.txt", "schedule.json", "graph.json"]
        {
            assert!(out_dir.join(artifact).is_file(), "missing artifact {}", artifact);
        }
        let stats = fs::read_to_string(out_dir.join("stats.txt")).unwrap();
        assert!(stats.contains("MC_error"));
        let csv = fs::read_to_string(out_dir.join("samples.csv")).unwrap();
        assert!(csv.starts_with("name,chain,iteration,value\n"));
        // Monitoring froze adaptation at iteration 150, so retained draws
        // start at 151 and each chain holds 250 of them.
        assert!(csv.contains("\nmu,0,151,"), "csv should start chains at 151");
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 250);
    }

    #[test]
    fn the_same_script_and_seed_reproduce_identical_output() {
        let dir = fixture_dir();
        let script = "modelCheck('model.bug')\n\
                      modelData('data.txt')\n\
                      modelCompile(2)\n\
                      modelGenInits()\n\
                      modelUpdate(100)\n\
                      samplesSet('mu')\n\
                      samplesSet('sigma')\n\
                      modelUpdate(100)\n\
                      samplesStats()\n";
        let opts = ScriptOptions { seed: 9, ..Default::default() };
        let first = run(dir.path(), &opts, script).unwrap();
        let second = run(dir.path(), &opts, script).unwrap();
        assert_eq!(first, second);
        let third =
            run(dir.path(), &ScriptOptions { seed: 10, ..Default::default() }, script).unwrap();
        assert_ne!(first, third);
    }

    #[test]
    fn implicit_distribution_uses_the_default_core_count() {
        let dir = fixture_dir();
        let opts = ScriptOptions { default_cores: Some(4), ..Default::default() };
        let text = run(
            dir.path(),
            &opts,
            "modelCheck('model.bug')\n\
             modelData('data.txt')\n\
             modelCompile(2)\n\
             modelGenInits()\n\
             modelUpdate(20)\n\
             infoDistribution()\n",
        )
        .unwrap();
        // Two cores per chain leave their mark on the schedule dump.
        assert!(text.contains("core 1"), "schedule dump missing cores:\n{}", text);
        assert!(text.contains("core 2"), "schedule dump missing cores:\n{}", text);

        let odd = ScriptOptions { default_cores: Some(3), ..Default::default() };
        let err = run(
            dir.path(),
            &odd,
            "modelCheck('model.bug')\n\
             modelData('data.txt')\n\
             modelCompile(2)\n\
             modelGenInits()\n\
             modelUpdate(20)\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("default core count"), "{}", err);
    }

    #[test]
    fn inits_without_a_chain_number_fill_chains_in_order() {
        let dir = fixture_dir();
        let opts = ScriptOptions::default();
        let text = run(
            dir.path(),
            &opts,
            "modelCheck('model.bug')\n\
             modelData('data.txt')\n\
             modelCompile(2)\n\
             modelInits('inits1.txt')\n\
             modelInits('inits2.txt')\n\
             modelUpdate(10)\n",
        )
        .unwrap();
        assert!(text.contains("initial values loaded for chain 1"));
        assert!(text.contains("initial values loaded for chain 2"));

        let err = run(
            dir.path(),
            &opts,
            "modelCheck('model.bug')\n\
             modelData('data.txt')\n\
             modelCompile(1)\n\
             modelInits('inits1.txt')\n\
             modelInits('inits2.txt')\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("already have initial values"), "{}", err);
    }

    #[test]
    fn monitors_cannot_change_once_sampling_has_output() {
        let dir = fixture_dir();
        let err = run(
            dir.path(),
            &ScriptOptions::default(),
            "modelCheck('model.bug')\n\
             modelData('data.txt')\n\
             modelCompile(1)\n\
             modelGenInits()\n\
             samplesSet('mu')\n\
             modelUpdate(10)\n\
             samplesSet('sigma')\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("set every monitor before"), "{}", err);
    }

    #[test]
    fn run_script_reads_files_relative_to_the_script() {
        let dir = fixture_dir();
        let script_path = dir.path().join("fit.txt");
        fs::write(
            &script_path,
            "modelCheck('model.bug')\n\
             modelData('data.txt')\n\
             modelCompile(1)\n\
             modelGenInits()\n\
             modelUpdate(10)\n",
        )
        .unwrap();
        let mut out = Vec::new();
        run_script(&script_path, &ScriptOptions::default(), &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("10 updates done"));

        let err = run_script(&dir.path().join("missing.txt"), &ScriptOptions::default(), &mut Vec::new())
            .unwrap_err();
        assert!(matches!(err, ScriptError::Unreadable { .. }), "{}", err);
    }
}
