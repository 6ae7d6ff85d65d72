//! Command-line front end. [`run`] takes its streams as arguments so the
//! whole surface can be driven from tests.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use mindmap::anima::{read_signatures, SigStore};
use mindmap::biblio::BiblioState;
use mindmap::report::{CommunityRow, Field, ReportRecord, TrendRow};
use mindmap::stream::{self, CsvRecords, LineError};
use mindmap::{
    communities, emit_report, AuthorPair, EngineParams, FeedbackGraph, FeedbackParams, Format,
    MindMap, PubRecord, WindowConfig,
};

/// Bytes pulled from the data stream per scan step.
const SCAN_CHUNK: usize = 64 * 1024;

#[derive(Parser, Debug)]
#[command(
    name = "mindmap",
    version,
    about = "Incremental adaptive mind-maps over transactional streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fold transactions (JSON lines) into a snapshot.
    Ingest(IngestArgs),
    /// Print the strongest connections of a snapshot.
    Topk(TopkArgs),
    /// Write a snapshot as a DOT graph.
    Export(ExportArgs),
    /// Scan byte data against a signature file.
    Scan(ScanArgs),
    /// Re-rank a baseline result list using a session log.
    Rerank(RerankArgs),
    /// Co-author windows, communities and pair trends.
    Biblio(BiblioArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Snapshot to update; a missing file starts an empty map.
    #[arg(long)]
    snapshot: PathBuf,
    /// Where to write the result (defaults to --snapshot).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Engine parameter override, e.g. lambda=0.1.
    #[arg(long = "params", value_name = "K=V")]
    params: Vec<String>,
    /// Transaction files; none or "-" reads standard input.
    inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct TopkArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "jsonl")]
    format: Format,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only export the neighbourhood of this token.
    #[arg(long, value_name = "TOKEN")]
    around: Option<String>,
    #[arg(long, default_value_t = 1, requires = "around")]
    depth: usize,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// One signature per line, `%XX` escapes, `#` comments.
    #[arg(long)]
    signatures: PathBuf,
    /// Smallest probabilistic score to report.
    #[arg(long = "p-min", default_value_t = 0.0)]
    p_min: f64,
    #[arg(long, default_value = "jsonl")]
    format: Format,
    /// Data to scan; omitted or "-" reads standard input.
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RerankArgs {
    /// Session log (JSON lines).
    #[arg(long)]
    sessions: PathBuf,
    /// Baseline results (JSON lines of {"doc","score"}) in baseline order.
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    query: String,
    /// Feedback or engine parameter override, e.g. beta=0.8.
    #[arg(long = "params", value_name = "K=V")]
    params: Vec<String>,
    #[arg(long, default_value = "jsonl")]
    format: Format,
}

#[derive(Args, Debug)]
struct BiblioArgs {
    /// Publication records as JSON lines or CSV; "-" reads standard input.
    #[arg(long)]
    records: PathBuf,
    /// First window start, window width and step, in years.
    #[arg(long, value_name = "START:WIDTH:STEP")]
    window: WindowSpec,
    /// Last window start (defaults to the latest record year).
    #[arg(long)]
    until: Option<i64>,
    #[arg(long = "min-multiplicity", default_value_t = 2)]
    min_multiplicity: u32,
    /// Author pair "A;B" to trace across windows.
    #[arg(long, value_name = "A;B")]
    pair: Vec<String>,
    /// What to print.
    #[arg(long, value_enum, default_value_t = BiblioReport::Communities)]
    report: BiblioReport,
    #[arg(long, default_value = "jsonl")]
    format: Format,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum BiblioReport {
    Windows,
    Communities,
    Trends,
}

#[derive(Clone, Copy, Debug)]
struct WindowSpec {
    start: i64,
    cfg: WindowConfig,
}

impl std::str::FromStr for WindowSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, width, step] = parts[..] else {
            return Err("expected START:WIDTH:STEP".into());
        };
        let start = start
            .parse()
            .map_err(|_| format!("bad start year {start:?}"))?;
        let width = width.parse().map_err(|_| format!("bad width {width:?}"))?;
        let step = step.parse().map_err(|_| format!("bad step {step:?}"))?;
        let cfg = WindowConfig::new(width, step).map_err(|e| e.to_string())?;
        Ok(WindowSpec { start, cfg })
    }
}

/// A problem with the command line rather than with the inputs.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Streams<'a> {
    stdin: &'a mut dyn BufRead,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

/// Runs one invocation and returns its exit code: 0 on success, 1 for
/// input or output failures, 2 for usage errors.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    let mut io = Streams {
        stdin,
        stdout,
        stderr,
    };
    let outcome = dispatch(cli.command, &mut io).and_then(|()| {
        io.stdout.flush().context("writing output")?;
        Ok(())
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let code = if e.is::<UsageError>() { 2 } else { 1 };
            let _ = writeln!(io.stderr, "error: {e:#}");
            code
        }
    }
}

fn dispatch(command: Command, io: &mut Streams) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a, io),
        Command::Topk(a) => topk(a, io),
        Command::Export(a) => export(a, io),
        Command::Scan(a) => scan(a, io),
        Command::Rerank(a) => rerank(a, io),
        Command::Biblio(a) => biblio(a, io),
    }
}

fn is_stdin(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

/// Calls `f` with a reader over `path`, or over standard input for "-".
fn with_input<R>(
    path: &Path,
    stdin: &mut dyn BufRead,
    f: impl FnOnce(&mut dyn BufRead) -> Result<R>,
) -> Result<R> {
    if is_stdin(path) {
        f(stdin)
    } else {
        f(&mut open(path)?)
    }
}

fn report_skipped(stderr: &mut dyn Write, source: &str, errors: &[LineError]) -> Result<()> {
    for e in errors {
        writeln!(stderr, "{source}:{e}")?;
    }
    Ok(())
}

fn apply_engine_param(p: &mut EngineParams, key: &str, value: &str) -> Result<bool> {
    let real = || -> Result<f64> {
        value
            .parse()
            .map_err(|_| usage(format!("{key}: {value:?} is not a number")))
    };
    match key {
        "w0" => p.w0 = real()?,
        "eta" => p.eta = real()?,
        "lambda" => p.lambda = real()?,
        "theta_death" => p.theta_death = real()?,
        "graveyard_ticks" => {
            p.graveyard_ticks = value
                .parse()
                .map_err(|_| usage(format!("graveyard_ticks: {value:?} is not a tick count")))?
        }
        _ => return Ok(false),
    }
    Ok(true)
}

fn split_param(raw: &str) -> Result<(&str, &str)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| usage(format!("--params expects K=V, got {raw:?}")))
}

fn engine_params(base: EngineParams, overrides: &[String]) -> Result<EngineParams> {
    let mut p = base;
    for raw in overrides {
        let (k, v) = split_param(raw)?;
        if !apply_engine_param(&mut p, k, v)? {
            return Err(usage(format!("unknown parameter {k:?}")));
        }
    }
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

fn feedback_params(overrides: &[String]) -> Result<FeedbackParams> {
    let mut p = FeedbackParams::default();
    for raw in overrides {
        let (k, v) = split_param(raw)?;
        if apply_engine_param(&mut p.engine, k, v)? {
            continue;
        }
        let slot = match k {
            "alpha" => &mut p.alpha,
            "beta" => &mut p.beta,
            "gamma" => &mut p.gamma,
            "tau" => &mut p.tau,
            _ => return Err(usage(format!("unknown parameter {k:?}"))),
        };
        *slot = v
            .parse()
            .map_err(|_| usage(format!("{k}: {v:?} is not a number")))?;
    }
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

fn engine_header(p: &EngineParams) -> String {
    format!(
        "w0={} eta={} lambda={} theta_death={} graveyard_ticks={}",
        p.w0, p.eta, p.lambda, p.theta_death, p.graveyard_ticks
    )
}

fn load_snapshot(path: &Path) -> Result<MindMap> {
    MindMap::read_snapshot(open(path)?)
        .with_context(|| format!("cannot load snapshot {}", path.display()))
}

/// Writes via a sibling temporary file so a failed run never leaves a
/// half-written snapshot behind.
fn save_snapshot(map: &MindMap, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let write = || -> io::Result<()> {
        let mut out = BufWriter::new(File::create(&tmp)?);
        map.write_snapshot(&mut out)?;
        out.into_inner().map_err(|e| e.into_error())?.sync_all()
    };
    write().with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot replace {}", path.display()))
}

fn ingest(a: IngestArgs, io: &mut Streams) -> Result<()> {
    let mut map = if a.snapshot.exists() {
        load_snapshot(&a.snapshot)?
    } else {
        MindMap::new(EngineParams::default())?
    };
    let params = engine_params(*map.params(), &a.params)?;
    map.set_params(params)?;
    writeln!(io.stderr, "# mindmap ingest {}", engine_header(&params))?;

    let inputs = if a.inputs.is_empty() {
        vec![PathBuf::from("-")]
    } else {
        a.inputs
    };
    let (mut applied, mut skipped) = (0usize, 0usize);
    for path in &inputs {
        let name = if is_stdin(path) {
            "<stdin>".to_string()
        } else {
            path.display().to_string()
        };
        let errors = with_input(path, io.stdin, |reader| {
            let mut txns = stream::parse_transaction_stream(reader);
            for txn in txns.by_ref() {
                map.ingest_transaction(&txn.with_context(|| format!("reading {name}"))?);
                applied += 1;
            }
            Ok(txns.into_errors())
        })?;
        skipped += errors.len();
        report_skipped(io.stderr, &name, &errors)?;
    }
    let out = a.out.as_deref().unwrap_or(&a.snapshot);
    save_snapshot(&map, out)?;
    writeln!(
        io.stderr,
        "# ingested {applied} transactions ({skipped} malformed lines skipped); tick {}, {} cells, {} connections, {} graves",
        map.tick(),
        map.cell_count(),
        map.connection_count(),
        map.graveyard().count()
    )?;
    Ok(())
}

fn topk(a: TopkArgs, io: &mut Streams) -> Result<()> {
    let map = load_snapshot(&a.snapshot)?;
    writeln!(io.stderr, "# mindmap topk k={} tick={}", a.k, map.tick())?;
    emit_report(map.retrieve_top_k(a.k), a.format, &mut *io.stdout).context("writing report")?;
    Ok(())
}

fn export(a: ExportArgs, io: &mut Streams) -> Result<()> {
    let map = load_snapshot(&a.snapshot)?;
    writeln!(io.stderr, "# mindmap export tick={}", map.tick())?;
    let dot = match &a.around {
        Some(token) => map.neighborhood(token, a.depth).export_dot(),
        None => map.export_dot(),
    };
    match &a.out {
        Some(path) => {
            fs::write(path, dot).with_context(|| format!("cannot write {}", path.display()))?
        }
        None => io
            .stdout
            .write_all(dot.as_bytes())
            .context("writing output")?,
    }
    Ok(())
}

/// Scans a reader in chunks, keeping the last `max_len - 1` bytes of each
/// chunk so windows that straddle a boundary are still seen whole.
struct ChunkedScan<'a> {
    store: &'a SigStore,
    scanner: mindmap::anima::Scanner<'a>,
    reader: &'a mut dyn BufRead,
    p_min: f64,
    buf: Vec<u8>,
    base: usize,
    pending: std::vec::IntoIter<mindmap::Hit>,
    done: bool,
    error: Option<io::Error>,
}

impl ChunkedScan<'_> {
    fn refill(&mut self) -> io::Result<bool> {
        if self.done {
            return Ok(false);
        }
        let read = (&mut *self.reader)
            .take(SCAN_CHUNK as u64)
            .read_to_end(&mut self.buf)?;
        // read_to_end only stops short of the limit at end of input
        let eof = read < SCAN_CHUNK;
        let carry = self.store.max_len().saturating_sub(1);
        let ready = if eof {
            self.done = true;
            self.buf.len()
        } else {
            self.buf.len().saturating_sub(carry)
        };
        let hits = self
            .scanner
            .scan_offsets(&self.buf, 0..ready, self.p_min)
            .expect("p_min checked before scanning");
        let base = self.base;
        self.pending = hits
            .into_iter()
            .map(|mut h| {
                h.offset += base;
                h
            })
            .collect::<Vec<_>>()
            .into_iter();
        self.buf.drain(..ready);
        self.base += ready;
        Ok(true)
    }
}

impl Iterator for ChunkedScan<'_> {
    type Item = mindmap::Hit;

    fn next(&mut self) -> Option<mindmap::Hit> {
        loop {
            if let Some(hit) = self.pending.next() {
                return Some(hit);
            }
            match self.refill() {
                Ok(true) => continue,
                Ok(false) => return None,
                Err(e) => {
                    self.error = Some(e);
                    self.done = true;
                    return None;
                }
            }
        }
    }
}

fn scan(a: ScanArgs, io: &mut Streams) -> Result<()> {
    if !(0.0..=1.0).contains(&a.p_min) {
        return Err(usage(format!(
            "--p-min must lie in [0, 1], got {}",
            a.p_min
        )));
    }
    let sigs = read_signatures(open(&a.signatures)?)
        .with_context(|| format!("cannot read signatures from {}", a.signatures.display()))?;
    let mut store = SigStore::new();
    for sig in sigs {
        let rec = store.insert_signature(sig);
        if rec.over_unity() {
            writeln!(
                io.stderr,
                "warning: signature {} sums to {} before its residual and cannot alert exactly",
                rec.signature(),
                rec.path_sum()
            )?;
        }
    }
    writeln!(
        io.stderr,
        "# mindmap scan p_min={} signatures={} cells={} edges={}",
        a.p_min,
        store.record_count(),
        store.cell_count(),
        store.edge_count()
    )?;
    let data = a.data.unwrap_or_else(|| PathBuf::from("-"));
    let stdout = &mut *io.stdout;
    with_input(&data, io.stdin, |reader| {
        let mut hits = ChunkedScan {
            store: &store,
            scanner: store.scanner(),
            reader,
            p_min: a.p_min,
            buf: Vec::new(),
            base: 0,
            pending: Vec::new().into_iter(),
            done: false,
            error: None,
        };
        emit_report(&mut hits, a.format, &mut *stdout).context("writing report")?;
        match hits.error {
            Some(e) => Err(e).with_context(|| format!("reading {}", data.display())),
            None => Ok(()),
        }
    })
}

fn rerank(a: RerankArgs, io: &mut Streams) -> Result<()> {
    if is_stdin(&a.sessions) && is_stdin(&a.baseline) {
        return Err(usage(
            "--sessions and --baseline cannot both read standard input",
        ));
    }
    let params = feedback_params(&a.params)?;
    writeln!(
        io.stderr,
        "# mindmap rerank alpha={} beta={} gamma={} tau={} {}",
        params.alpha,
        params.beta,
        params.gamma,
        params.tau,
        engine_header(&params.engine)
    )?;
    let mut graph = FeedbackGraph::new(params)?;
    let session_errors = with_input(&a.sessions, io.stdin, |reader| {
        let mut sessions = stream::parse_session_log(reader);
        for s in sessions.by_ref() {
            graph.ingest_session(&s.context("reading sessions")?)?;
        }
        Ok(sessions.into_errors())
    })?;
    report_skipped(
        io.stderr,
        &a.sessions.display().to_string(),
        &session_errors,
    )?;

    let (baseline, baseline_errors) = with_input(&a.baseline, io.stdin, |reader| {
        let mut rows = stream::parse_baseline(reader);
        let docs = rows
            .by_ref()
            .collect::<io::Result<Vec<_>>>()
            .context("reading baseline")?;
        Ok((docs, rows.into_errors()))
    })?;
    report_skipped(
        io.stderr,
        &a.baseline.display().to_string(),
        &baseline_errors,
    )?;
    let ranked = graph.rerank(&a.query, &baseline, &params)?;
    emit_report(ranked, a.format, &mut *io.stdout).context("writing report")?;
    Ok(())
}

/// Peeks at the first non-blank byte: `{` means JSON lines, anything else
/// is read as CSV.
fn looks_like_jsonl(reader: &mut dyn BufRead) -> io::Result<bool> {
    loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            return Ok(true);
        }
        match buf.iter().position(|b| !b.is_ascii_whitespace()) {
            Some(i) => return Ok(buf[i] == b'{'),
            None => {
                let n = buf.len();
                reader.consume(n);
            }
        }
    }
}

fn load_records(path: &Path, io: &mut Streams) -> Result<BiblioState> {
    let mut state = BiblioState::new();
    let name = path.display().to_string();
    let errors = with_input(path, io.stdin, |reader| {
        let jsonl = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => false,
            Some("jsonl") | Some("json") => true,
            _ => looks_like_jsonl(reader).with_context(|| format!("reading {name}"))?,
        };
        let mut add = |rec: io::Result<PubRecord>| -> Result<()> {
            state.ingest_record(rec.with_context(|| format!("reading {name}"))?);
            Ok(())
        };
        if jsonl {
            let mut recs = stream::parse_records_jsonl(reader);
            recs.by_ref().try_for_each(&mut add)?;
            Ok(recs.into_errors())
        } else {
            let mut recs = CsvRecords::new(reader);
            recs.by_ref().try_for_each(&mut add)?;
            Ok(recs.into_errors())
        }
    })?;
    report_skipped(io.stderr, &name, &errors)?;
    if state.duplicate_count() > 0 {
        writeln!(
            io.stderr,
            "{name}: {} duplicate record ids ignored",
            state.duplicate_count()
        )?;
    }
    Ok(state)
}

/// One edge of one window.
struct WindowEdgeRow {
    window_start: i64,
    window_end: i64,
    first: String,
    second: String,
    multiplicity: u32,
}

impl ReportRecord for WindowEdgeRow {
    fn fields(&self) -> Vec<(&'static str, Field)> {
        vec![
            ("window_start", Field::Int(self.window_start)),
            ("window_end", Field::Int(self.window_end)),
            ("first", Field::Text(self.first.clone())),
            ("second", Field::Text(self.second.clone())),
            ("multiplicity", Field::Uint(self.multiplicity.into())),
        ]
    }
}

fn biblio(a: BiblioArgs, io: &mut Streams) -> Result<()> {
    let pairs = a
        .pair
        .iter()
        .map(|raw| {
            let (x, y) = raw
                .split_once(';')
                .ok_or_else(|| usage(format!("--pair expects \"A;B\", got {raw:?}")))?;
            AuthorPair::new(x.trim(), y.trim()).map_err(|e| usage(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    if matches!(a.report, BiblioReport::Trends) && pairs.is_empty() {
        return Err(usage("--report trends needs at least one --pair"));
    }
    let state = load_records(&a.records, io)?;
    let WindowSpec { start, cfg } = a.window;
    let until = match (a.until, state.year_range()) {
        (Some(y), _) => y,
        (None, Some((_, last))) => last,
        (None, None) => start,
    };
    if until < start {
        return Err(usage(format!(
            "--until {until} is before the first window {start}"
        )));
    }
    writeln!(
        io.stderr,
        "# mindmap biblio window={start}:{}:{} until={until} min_multiplicity={} records={}",
        cfg.width(),
        cfg.step(),
        a.min_multiplicity,
        state.record_count()
    )?;
    let width = i64::from(cfg.width());
    let out = &mut *io.stdout;
    match a.report {
        BiblioReport::Windows => {
            let rows = state.windows(start, until, cfg).flat_map(|(s, g)| {
                g.edges()
                    .map(|(p, m)| WindowEdgeRow {
                        window_start: s,
                        window_end: s + width,
                        first: p.first().to_string(),
                        second: p.second().to_string(),
                        multiplicity: m,
                    })
                    .collect::<Vec<_>>()
            });
            emit_report(rows, a.format, out)
        }
        BiblioReport::Communities => {
            let min = a.min_multiplicity;
            let rows = state.windows(start, until, cfg).flat_map(|(s, g)| {
                communities(&g, min)
                    .into_iter()
                    .map(move |members| CommunityRow {
                        window_start: s,
                        window_end: s + width,
                        members,
                    })
                    .collect::<Vec<_>>()
            });
            emit_report(rows, a.format, out)
        }
        BiblioReport::Trends => {
            let rows = pairs
                .into_iter()
                .map(|pair| {
                    let report = state.trend(&pair, cfg, start, until)?;
                    Ok(TrendRow { pair, report })
                })
                .collect::<Result<Vec<_>, mindmap::biblio::BiblioError>>()
                .map_err(|e| anyhow!(e))?;
            emit_report(rows, a.format, out)
        }
    }
    .context("writing report")?;
    Ok(())
}
