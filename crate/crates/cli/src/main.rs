use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flowseg::eval::{evaluate_sequence, format_table, EvalResult};
use flowseg::media_io::{davis_palette, load_mask, save_frame, save_mask, BoundarySource, Frame, LabelMask};
use flowseg::pipeline::{segment_sequence, select_lambda, SequenceRun, SequenceSpec};
use flowseg::{Error, Result};

/// Propagates a key-frame segmentation through a video using optical flow
/// and a variational multi-label solver.
#[derive(Parser, Debug)]
#[command(name = "flowseg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment every frame of a sequence file
    Segment {
        #[arg(long)]
        spec: PathBuf,
        /// Directory receiving one mask per frame
        #[arg(long)]
        out: PathBuf,
        /// Also write color overlays of the masks on the frames
        #[arg(long)]
        overlay: bool,
    },
    /// Score predicted masks against ground truth
    ///
    /// Both directories hold one PNG mask per frame, paired by sorted file
    /// name. If the prediction directory has subdirectories, each one is a
    /// sequence matched with the ground-truth subdirectory of the same name.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Boundary matching tolerance in pixels (default: 0.8% of the diagonal)
        #[arg(long)]
        tol: Option<usize>,
        /// Write one JSON record per frame and object to this file
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Segment with parts of the model switched off
    Ablate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disable lost object retrieval
        #[arg(long)]
        no_lor: bool,
        /// Drop the flow direction feature
        #[arg(long)]
        no_fdir: bool,
        /// Drop both flow magnitude and direction features
        #[arg(long)]
        no_fmag_fdir: bool,
        /// Perimeter weight source
        #[arg(long, value_enum)]
        boundary: Option<BoundaryChoice>,
        /// Ground-truth directory; prints scores when given
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Run only the lambda grid search and print the chosen value
    SelectLambda {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum BoundaryChoice {
    Sed,
    Hed,
    Cob,
    /// Learned boundaries fused with motion boundaries
    Fused,
    /// Image gradient only
    Gradient,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Segment { spec, out, overlay } => {
            let spec = SequenceSpec::from_file(&spec)?;
            segment(&spec, &out, overlay)?;
        }
        Command::Eval { pred, gt, tol, records } => {
            let (names, results) = evaluate_dirs(&pred, &gt, tol)?;
            report(&names, &results, records.as_deref())?;
        }
        Command::Ablate { spec, out, no_lor, no_fdir, no_fmag_fdir, boundary, gt } => {
            let mut spec = SequenceSpec::from_file(&spec)?;
            let config = &mut spec.config;
            config.lor_enabled &= !no_lor;
            if no_fdir || no_fmag_fdir {
                config.theta = 0.0;
            }
            if no_fmag_fdir {
                config.alpha = 0.0;
            }
            match boundary {
                None => {}
                Some(BoundaryChoice::Gradient) => spec.config.boundary_source = BoundarySource::Gradient,
                Some(BoundaryChoice::Fused) => {
                    spec.config.boundary_source = BoundarySource::LearnedPlusMotion
                }
                Some(named) => {
                    let name = format!("{named:?}").to_lowercase();
                    spec.select_boundaries(&name)?;
                    spec.config.boundary_source = BoundarySource::Learned;
                }
            }
            let written = segment(&spec, &out, false)?;
            if let Some(gt) = gt {
                let gts = load_masks(&sorted_pngs(&gt)?, None)?;
                let preds = load_masks(&written, Some(gts[0].num_labels()))?;
                let result = evaluate_sequence(&spec.name, &preds, &gts, None)?;
                report(&[spec.name.clone()], &[result], None)?;
            }
        }
        Command::SelectLambda { spec } => {
            let spec = SequenceSpec::from_file(&spec)?;
            let lambda = select_lambda(&spec.load()?, &spec.config)?;
            println!("{lambda}");
        }
    }
    Ok(())
}

/// Runs the sequence and writes one mask per frame, named after the frame.
fn segment(spec: &SequenceSpec, out: &Path, overlay: bool) -> Result<Vec<PathBuf>> {
    let seq = spec.load()?;
    let SequenceRun { lambda, masks, steps } = segment_sequence(&seq, &spec.config)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    println!("lambda {lambda}");
    for s in &steps {
        println!(
            "frame {}: confident {} clamped {} scribbles {} retrieved {} iterations {} objective {:.3}",
            s.frame,
            s.confident,
            s.clamped,
            s.scribbles,
            s.retrieved,
            s.solver.iterations,
            s.solver.objective
        );
    }
    let mut written = Vec::with_capacity(masks.len());
    for (t, mask) in masks.iter().enumerate() {
        let stem = spec.frames[t].file_stem().map(|s| s.to_string_lossy().into_owned());
        let stem = stem.unwrap_or_else(|| format!("{t:05}"));
        let path = out.join(format!("{stem}.png"));
        save_mask(mask, &path)?;
        if overlay {
            save_frame(&overlay_frame(&seq.frames[t], mask), out.join(format!("{stem}_overlay.png")))?;
        }
        written.push(path);
    }
    Ok(written)
}

fn overlay_frame(frame: &Frame, mask: &LabelMask) -> Frame {
    let palette = davis_palette();
    let pixels = frame
        .pixels()
        .iter()
        .zip(mask.labels())
        .map(|(&rgb, &label)| match label {
            0 => rgb,
            l => {
                let c = palette[l as usize % palette.len()];
                [0, 1, 2].map(|k| 0.5 * rgb[k] + 0.5 * c[k] as f64)
            }
        })
        .collect();
    Frame::new(frame.width(), frame.height(), pixels).expect("same size as the source frame")
}

fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .filter(|p| !p.file_stem().is_some_and(|s| s.to_string_lossy().ends_with("_overlay")))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads masks sharing one label count: `labels`, or the first mask's.
fn load_masks(paths: &[PathBuf], labels: Option<usize>) -> Result<Vec<LabelMask>> {
    let first = paths.first().ok_or_else(|| Error::RejectedInput("directory holds no PNG masks".into()))?;
    let first = load_mask(first, labels)?;
    let n = first.num_labels();
    let mut masks = vec![first];
    for p in &paths[1..] {
        masks.push(load_mask(p, Some(n))?);
    }
    Ok(masks)
}

fn evaluate_dirs(pred: &Path, gt: &Path, tol: Option<usize>) -> Result<(Vec<String>, Vec<EvalResult>)> {
    let mut subdirs: Vec<PathBuf> = fs::read_dir(pred)
        .map_err(|e| Error::io(pred, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let pairs: Vec<(String, PathBuf, PathBuf)> = if subdirs.is_empty() {
        let name = pred.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        vec![(name, pred.to_path_buf(), gt.to_path_buf())]
    } else {
        subdirs
            .into_iter()
            .map(|d| {
                let name = d.file_name().expect("read_dir entries have names").to_string_lossy().into_owned();
                let gt_dir = gt.join(&name);
                (name, d, gt_dir)
            })
            .collect()
    };
    let mut names = Vec::new();
    let mut results = Vec::new();
    for (name, pred_dir, gt_dir) in pairs {
        let gts = load_masks(&sorted_pngs(&gt_dir)?, None)?;
        let preds = load_masks(&sorted_pngs(&pred_dir)?, Some(gts[0].num_labels()))?;
        results.push(evaluate_sequence(&name, &preds, &gts, tol)?);
        names.push(name);
    }
    Ok((names, results))
}

fn report(names: &[String], results: &[EvalResult], records: Option<&Path>) -> Result<()> {
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    print!("{}", format_table(&refs, results));
    for (name, r) in names.iter().zip(results) {
        if r.objects.len() > 1 {
            for o in &r.objects {
                println!("{name} object {}: J {:.1} F {:.1}", o.object, 100.0 * o.j.mean, 100.0 * o.f.mean);
            }
        }
    }
    if let Some(path) = records {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for record in results.iter().flat_map(|r| &r.records) {
            let line = serde_json::to_string(record).expect("records serialize");
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}
