use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Analysis, RunConfig, TauVariant};
use super::table::{Cell, Table};
use super::{sanitize, Artifact, Inputs, ReportError, Skipped};
use crate::chunking::{
    aggregate_chunk_scores, chunk_requests, chunking_effect, flip_analysis, partition_summary, write_chunk_requests, R2Diff, R2Partition,
};
use crate::consistency::pairwise_consistency;
use crate::corpus::{Corpus, PredictionSet};
use crate::metrics::{corpus_confusion, mean_defined, rates, Label};
use crate::overlap::{assign_bins, bin_rates, rouge2_by_claim};
use crate::par_map;
use crate::quantify::{cross_validate_calibration, system_bias, BiasReport, CalibrationMethod, Level, QuantifyError};
use crate::rank::{
    kendall_tau, kendall_tau_b, pair_decisions, pearson_rho, ranking_confusion, system_error_rates, Direction, LabelSource, RankError,
    RankOptions,
};

#[derive(Serialize)]
struct Series {
    name: String,
    x: Vec<Value>,
    y: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct Plot {
    figure_id: String,
    series: Vec<Series>,
}

fn series(name: impl Into<String>, x: Vec<Value>, y: Vec<Option<f64>>) -> Series {
    Series { name: name.into(), x, y }
}

fn labels<S: AsRef<str>>(names: &[S]) -> Vec<Value> {
    names.iter().map(|n| Value::from(n.as_ref())).collect()
}

#[derive(Default)]
pub(super) struct Output {
    pub artifacts: Vec<Artifact>,
    pub skipped: Vec<Skipped>,
}

struct Emitter<'a> {
    cfg: &'a RunConfig,
    analysis: Analysis,
    out: Output,
}

impl<'a> Emitter<'a> {
    fn new(cfg: &'a RunConfig, analysis: Analysis) -> Self {
        Self {
            cfg,
            analysis,
            out: Output::default(),
        }
    }

    fn path(&self, scope: &str, ext: &str) -> String {
        format!("{}/{}.{ext}", self.analysis, sanitize(scope))
    }

    fn raw(&mut self, scope: &str, ext: &str, bytes: Vec<u8>) {
        let path = self.path(scope, ext);
        self.out.artifacts.push(Artifact { path, bytes });
    }

    fn table(&mut self, scope: &str, table: &Table) -> Result<(), ReportError> {
        let text = table.render(self.cfg.table_format)?;
        self.raw(scope, self.cfg.table_format.extension(), text.into_bytes());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, scope: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report values serialize");
        bytes.push(b'\n');
        self.raw(scope, "json", bytes);
    }

    fn plot(&mut self, scope: &str, figure: &str, series: Vec<Series>) {
        if self.cfg.plots {
            let plot = Plot {
                figure_id: format!("{figure}_{}", sanitize(scope)),
                series,
            };
            let mut bytes = serde_json::to_vec_pretty(&plot).expect("plot serializes");
            bytes.push(b'\n');
            self.raw(scope, "plot.json", bytes);
        }
    }

    fn skip(&mut self, scope: &str, reason: impl Into<String>) {
        self.out.skipped.push(Skipped {
            analysis: self.analysis,
            scope: scope.to_string(),
            reason: reason.into(),
        });
    }

    fn fail(&self, scope: &str, err: impl std::fmt::Display) -> ReportError {
        ReportError::Analysis {
            analysis: self.analysis,
            scope: scope.to_string(),
            message: err.to_string(),
        }
    }

    /// Runs `per_slice` over every dataset in parallel and collects the outputs in order.
    fn per_dataset(
        mut self,
        slices: &[(String, Corpus)],
        per_slice: impl Fn(&mut Emitter<'a>, &str, &Corpus) -> Result<(), ReportError> + Sync + Send,
    ) -> Result<Output, ReportError> {
        let (cfg, analysis) = (self.cfg, self.analysis);
        let parts = par_map(slices, |(name, slice)| {
            let mut e = Emitter::new(cfg, analysis);
            per_slice(&mut e, name, slice).map(|_| e.out)
        });
        for p in parts {
            let p = p?;
            self.out.artifacts.extend(p.artifacts);
            self.out.skipped.extend(p.skipped);
        }
        Ok(self.out)
    }
}

pub(super) struct Context<'a> {
    cfg: &'a RunConfig,
    inputs: &'a Inputs,
    slices: Vec<(String, Corpus)>,
    limit: NonZeroUsize,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig, inputs: &'a Inputs) -> Result<Self, ReportError> {
        let corpus = &inputs.corpus;
        let slices = corpus
            .datasets()
            .into_iter()
            .filter_map(|d| corpus.dataset_slice(&d).map(|s| (d, s)))
            .collect();
        Ok(Self {
            cfg,
            inputs,
            slices,
            limit: cfg.chunk_limit()?,
        })
    }

    fn preds(&self) -> &'a [PredictionSet] {
        &self.inputs.predictions
    }

    pub fn run(&self, analysis: Analysis) -> Result<Output, ReportError> {
        let mut e = Emitter::new(self.cfg, analysis);
        if self.preds().is_empty() && analysis != Analysis::Chunking {
            e.skip("*", "no prediction files");
            return Ok(e.out);
        }
        match analysis {
            Analysis::Metrics => self.metrics(e),
            Analysis::Consistency => self.consistency(e),
            Analysis::Quantify => self.quantify(e),
            Analysis::Calibrate => self.calibrate(e),
            Analysis::Rank => self.rank(e),
            Analysis::RougeBins => self.rouge_bins(e),
            Analysis::Chunking => self.chunking(e),
        }
    }

    fn metrics(&self, mut e: Emitter<'a>) -> Result<Output, ReportError> {
        let preds = self.preds();
        if self.slices.len() > 1 {
            let mut header = vec!["evaluator".to_string()];
            header.extend(self.slices.iter().map(|s| s.0.clone()));
            header.push("average".into());
            let mut table = Table::new(header);
            let mut raw = Vec::new();
            for p in preds {
                let per: Vec<Option<f64>> = self.slices.iter().map(|(_, s)| rates(&corpus_confusion(s, p)).bacc).collect();
                let avg = mean_defined(per.iter().copied());
                let mut row = vec![Cell::text(&p.evaluator)];
                row.extend(per.iter().map(|&b| Cell::Rate(b)));
                row.push(Cell::Rate(avg));
                table.push(row);
                raw.push(json!({"evaluator": p.evaluator, "bacc": per, "average": avg}));
            }
            e.table("summary", &table)?;
            e.json("summary", &json!({"datasets": self.slices.iter().map(|s| &s.0).collect::<Vec<_>>(), "rows": raw}));
        }
        e.per_dataset(&self.slices, |e, name, slice| {
            let mut table = Table::new(["evaluator", "scored", "n_pos", "n_neg", "TPR", "TNR", "FPR", "FNR", "BAcc"]);
            let mut raw = Vec::new();
            let mut plot = Vec::new();
            for p in preds {
                let c = corpus_confusion(slice, p);
                let r = rates(&c);
                table.push(vec![
                    Cell::text(&p.evaluator),
                    Cell::Int(c.total()),
                    Cell::Int(c.support_pos()),
                    Cell::Int(c.support_neg()),
                    Cell::Rate(r.tpr),
                    Cell::Rate(r.tnr),
                    Cell::Rate(r.fpr),
                    Cell::Rate(r.fnr),
                    Cell::Rate(r.bacc),
                ]);
                raw.push(json!({"evaluator": p.evaluator, "counts": c, "rates": r}));
                plot.push(series(&p.evaluator, labels(&["TPR", "TNR", "BAcc"]), vec![r.tpr, r.tnr, r.bacc]));
            }
            e.table(name, &table)?;
            e.json(name, &json!({"dataset": name, "threshold": self.cfg.threshold, "rows": raw}));
            e.plot(name, "rates", plot);
            Ok(())
        })
    }

    fn consistency(&self, mut e: Emitter<'a>) -> Result<Output, ReportError> {
        let preds = self.preds();
        if preds.len() < 2 {
            e.skip("*", "needs at least two evaluators");
            return Ok(e.out);
        }
        let names: Vec<&str> = preds.iter().map(|p| p.evaluator.as_str()).collect();
        e.per_dataset(&self.slices, |e, name, slice| {
            let mut header = vec!["target_label".to_string(), "evaluator".to_string(), "set_size".to_string()];
            header.extend(names.iter().map(|n| n.to_string()));
            let mut table = Table::new(header);
            let mut raw = Vec::new();
            let mut plot = Vec::new();
            for target in [Label::Unattributable, Label::Attributable] {
                let m = pairwise_consistency(preds, slice, target, None).map_err(|err| e.fail(name, err))?;
                for (i, ev) in m.evaluators.iter().enumerate() {
                    let mut row = vec![Cell::Int(target.as_u8() as u64), Cell::text(ev), Cell::Int(m.set_sizes[i] as u64)];
                    row.extend(m.iou[i].iter().map(|&v| Cell::Number(v, 3)));
                    table.push(row);
                    plot.push(series(format!("{}:{ev}", target.as_u8()), labels(&names), m.iou[i].clone()));
                }
                raw.push(m);
            }
            e.table(name, &table)?;
            e.json(name, &json!({"dataset": name, "matrices": raw}));
            e.plot(name, "iou", plot);
            Ok(())
        })
    }

    fn quantify(&self, e: Emitter<'a>) -> Result<Output, ReportError> {
        let preds = self.preds();
        e.per_dataset(&self.slices, |e, name, slice| {
            let mut header = vec!["level".to_string(), "system".to_string(), "label".to_string()];
            header.extend(preds.iter().map(|p| p.evaluator.clone()));
            let mut table = Table::new(header);
            let mut raw: Vec<BiasReport> = Vec::new();
            let mut plot = Vec::new();
            for level in [Level::Claim, Level::Response] {
                let reports: Result<Vec<BiasReport>, QuantifyError> = preds.iter().map(|p| system_bias(slice, p, level)).collect();
                let reports = match reports {
                    Ok(r) => r,
                    Err(QuantifyError::NoSystems) => {
                        e.skip(name, "no system metadata");
                        return Ok(());
                    }
                    Err(QuantifyError::NoResponses) => {
                        e.skip(&format!("{name}/response"), "no response ids");
                        continue;
                    }
                    Err(err) => return Err(e.fail(name, err)),
                };
                let first = &reports[0];
                for (i, row) in first.rows.iter().enumerate() {
                    let mut cells = vec![Cell::text(level.as_str()), Cell::text(&row.system), Cell::Rate(Some(row.labeled_rate))];
                    cells.extend(reports.iter().map(|r| Cell::Paired(r.rows[i].predicted_rate, r.rows[i].bias)));
                    table.push(cells);
                }
                let mut cells = vec![Cell::text(level.as_str()), Cell::text("Headroom"), Cell::Rate(Some(first.headroom.labeled_min))];
                cells.extend(reports.iter().map(|r| Cell::Paired(r.headroom.predicted_min, r.headroom.bias)));
                table.push(cells);
                if level == Level::Claim {
                    let systems: Vec<&str> = first.rows.iter().map(|r| r.system.as_str()).collect();
                    plot.push(series("label", labels(&systems), first.rows.iter().map(|r| Some(r.labeled_rate)).collect()));
                    for r in &reports {
                        plot.push(series(&r.evaluator, labels(&systems), r.rows.iter().map(|r| Some(r.predicted_rate)).collect()));
                    }
                }
                raw.extend(reports);
            }
            e.table(name, &table)?;
            e.json(name, &json!({"dataset": name, "reports": raw}));
            e.plot(name, "system_error_rates", plot);
            Ok(())
        })
    }

    fn calibrate(&self, e: Emitter<'a>) -> Result<Output, ReportError> {
        let preds = self.preds();
        e.per_dataset(&self.slices, |e, name, slice| {
            let gold = match system_error_rates(slice, LabelSource::Gold, Level::Claim) {
                Ok(g) => g,
                Err(RankError::Quantify(QuantifyError::NoSystems)) => {
                    e.skip(name, "no system metadata");
                    return Ok(());
                }
                Err(err) => return Err(e.fail(name, err)),
            };
            if gold.len() < 2 {
                e.skip(name, format!("needs at least two systems, found {}", gold.len()));
                return Ok(());
            }
            let mut header = vec!["evaluator".to_string(), "calibration_system".to_string(), "label_error_rate".to_string()];
            header.extend(CalibrationMethod::ALL.iter().map(|m| m.as_str().to_string()));
            let mut table = Table::new(header);
            let mut raw = Vec::new();
            let mut plot = Vec::new();
            let systems: Vec<&str> = gold.keys().map(String::as_str).collect();
            for p in preds {
                let cvs = CalibrationMethod::ALL
                    .iter()
                    .map(|&m| cross_validate_calibration(slice, p, m))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|err| e.fail(name, err))?;
                for (i, sys) in systems.iter().enumerate() {
                    let mut row = vec![Cell::text(&p.evaluator), Cell::text(*sys), Cell::Rate(Some(gold[*sys]))];
                    row.extend(cvs.iter().map(|cv| match cv.folds[i].result() {
                        Some(r) => Cell::Paired(r.mean_abs_bias, r.worst_abs_bias),
                        None => Cell::Rate(None),
                    }));
                    table.push(row);
                }
                let mut row = vec![Cell::text(&p.evaluator), Cell::text("Cross-Validated"), Cell::text("")];
                row.extend(cvs.iter().map(|cv| match (cv.mean_abs_bias, cv.worst_abs_bias) {
                    (Some(m), Some(w)) => Cell::Paired(m, w),
                    _ => Cell::Rate(None),
                }));
                table.push(row);
                for cv in &cvs {
                    let y = cv.folds.iter().map(|f| f.result().map(|r| r.mean_abs_bias)).collect();
                    plot.push(series(format!("{}:{}", p.evaluator, cv.method.as_str()), labels(&systems), y));
                }
                raw.extend(cvs);
            }
            e.table(name, &table)?;
            e.json(name, &json!({"dataset": name, "cross_validation": raw}));
            e.plot(name, "calibration_mean_abs_bias", plot);
            Ok(())
        })
    }

    fn rank(&self, e: Emitter<'a>) -> Result<Output, ReportError> {
        let preds = self.preds();
        let opts = RankOptions {
            alpha: self.cfg.alpha,
            level: self.cfg.rank_level,
            variance: self.cfg.variance,
        };
        let tau = self.cfg.tau;
        e.per_dataset(&self.slices, |e, name, slice| {
            let gold = match pair_decisions(slice, LabelSource::Gold, &opts) {
                Ok(g) => g,
                Err(err @ (RankError::TooFewSystems(_) | RankError::Quantify(QuantifyError::NoSystems | QuantifyError::NoResponses))) => {
                    e.skip(name, err.to_string());
                    return Ok(());
                }
                Err(err) => return Err(e.fail(name, err)),
            };
            let gold_by_system = system_error_rates(slice, LabelSource::Gold, opts.level).map_err(|err| e.fail(name, err))?;
            let systems: Vec<&str> = gold_by_system.keys().map(String::as_str).collect();
            let gold_rates: Vec<f64> = gold_by_system.values().copied().collect();

            let mut header = vec!["evaluator".to_string(), "pairs".to_string()];
            for g in Direction::ALL {
                for p in Direction::ALL {
                    header.push(format!("{}/{}", g.symbol(), p.symbol()));
                }
            }
            header.extend(["%Err", "%Major Err", "kendall_tau", "pearson_rho"].map(String::from));
            let mut table = Table::new(header);
            let mut raw = Vec::new();
            let mut plot = vec![series("label", labels(&systems), gold_rates.iter().map(|&r| Some(r)).collect())];
            for p in preds {
                let fail = |err: RankError| e.fail(&format!("{name}/{}", p.evaluator), err);
                let decisions = pair_decisions(slice, LabelSource::Predicted(p), &opts).map_err(fail)?;
                let confusion = ranking_confusion(&gold, &decisions).map_err(fail)?;
                let pred_rates: Vec<f64> = system_error_rates(slice, LabelSource::Predicted(p), opts.level).map_err(fail)?.into_values().collect();
                let tau_value = match tau {
                    TauVariant::A => kendall_tau(&gold_rates, &pred_rates),
                    TauVariant::B => kendall_tau_b(&gold_rates, &pred_rates),
                }
                .ok();
                let rho = pearson_rho(&gold_rates, &pred_rates).ok();
                let mut row = vec![Cell::text(&p.evaluator), Cell::Int(confusion.pairs())];
                row.extend(confusion.cells.iter().flatten().map(|&c| Cell::Int(c)));
                row.extend([
                    Cell::Number(Some(confusion.pct_err), 1),
                    Cell::Number(Some(confusion.pct_major_err), 1),
                    Cell::Number(tau_value, 3),
                    Cell::Number(rho, 3),
                ]);
                table.push(row);
                plot.push(series(&p.evaluator, labels(&systems), pred_rates.iter().map(|&r| Some(r)).collect()));
                raw.push(json!({
                    "evaluator": p.evaluator,
                    "decisions": decisions,
                    "confusion": confusion,
                    "kendall_tau": tau_value,
                    "pearson_rho": rho,
                }));
            }
            e.table(name, &table)?;
            e.json(
                name,
                &json!({"dataset": name, "level": opts.level, "alpha": opts.alpha, "variance": opts.variance, "gold": gold, "evaluators": raw}),
            );
            e.plot(name, "system_error_rates", plot);
            Ok(())
        })
    }

    fn rouge_bins(&self, mut e: Emitter<'a>) -> Result<Output, ReportError> {
        let corpus = &self.inputs.corpus;
        let rouge = rouge2_by_claim(corpus);
        let values: BTreeMap<String, f64> = rouge.iter().map(|(id, r)| (id.clone(), r.precision)).collect();
        let bins = assign_bins(corpus, &values, self.cfg.bins).map_err(|err| e.fail("*", err))?;
        for b in &bins {
            let scope = b.task_group.as_str();
            let mut table = Table::new(["evaluator", "bin", "upper_edge", "n_pos", "n_neg", "TPR", "TNR", "BAcc"]);
            let mut raw = Vec::new();
            let mut plot = Vec::new();
            let bin_ids: Vec<Value> = (0..=b.bin_edges.len()).map(Value::from).collect();
            for p in self.preds() {
                let rows = bin_rates(b, corpus, p).map_err(|err| e.fail(scope, err))?;
                for r in &rows {
                    table.push(vec![
                        Cell::text(&p.evaluator),
                        Cell::Int(r.bin as u64),
                        b.bin_edges.get(r.bin).map_or(Cell::text("max"), |&v| Cell::Number(Some(v), 4)),
                        Cell::Int(r.counts.support_pos()),
                        Cell::Int(r.counts.support_neg()),
                        Cell::Rate(r.rates.tpr),
                        Cell::Rate(r.rates.tnr),
                        Cell::Rate(r.rates.bacc),
                    ]);
                }
                plot.push(series(format!("{} TPR", p.evaluator), bin_ids.clone(), rows.iter().map(|r| r.rates.tpr).collect()));
                plot.push(series(format!("{} TNR", p.evaluator), bin_ids.clone(), rows.iter().map(|r| r.rates.tnr).collect()));
                raw.push(json!({"evaluator": p.evaluator, "bins": rows}));
            }
            let degenerate = b.assignment.keys().filter(|id| rouge[*id].degenerate).count();
            e.table(scope, &table)?;
            e.json(
                scope,
                &json!({"task_group": b.task_group, "bin_edges": b.bin_edges, "bin_sizes": b.bin_sizes(), "degenerate_claims": degenerate, "evaluators": raw}),
            );
            e.plot(scope, "rouge_bins", plot);
        }
        Ok(e.out)
    }

    fn chunking(&self, mut e: Emitter<'a>) -> Result<Output, ReportError> {
        let corpus = &self.inputs.corpus;
        let diffs: BTreeMap<String, (R2Diff, usize)> = crate::chunking::r2_diff_by_claim(corpus, self.limit);
        let mut buf = Vec::new();
        write_chunk_requests(&chunk_requests(corpus, self.limit), &mut buf).expect("writing to memory");
        e.out.artifacts.push(Artifact {
            path: format!("{}/requests.jsonl", Analysis::Chunking),
            bytes: buf,
        });

        let diff_only: BTreeMap<String, f64> = diffs.iter().map(|(id, d)| (id.clone(), d.0.diff)).collect();
        let mut chunked_sets = Vec::new();
        for (evaluator, scores) in &self.inputs.chunk_scores {
            let full = self.preds().iter().find(|p| &p.evaluator == evaluator).expect("checked when loaded");
            let set = aggregate_chunk_scores(scores, full, corpus, self.limit).map_err(|err| e.fail(evaluator, err))?;
            let flips = flip_analysis(corpus, full, &set, &diff_only).map_err(|err| e.fail(evaluator, err))?;
            let effect_full = chunking_effect(corpus, full, self.limit);
            let effect_chunked = chunking_effect(corpus, &set, self.limit);
            chunked_sets.push((full, flips, effect_full, effect_chunked));
        }

        let cfg_limit = self.limit.get();
        e.per_dataset(&self.slices, |e, name, slice| {
            let partitions = partition_summary(slice, &diffs);
            let multi_chunk: usize = partitions.iter().map(|p| p.multi_chunk).sum();
            let mut table = Table::new([
                "evaluator",
                "partition",
                "support",
                "mean_r2diff",
                "flips_to_0",
                "flips_to_1",
                "rate_to_0",
                "rate_to_1",
                "ppr_full",
                "ppr_chunked",
            ]);
            let mean = |p: R2Partition| partitions.iter().find(|s| s.partition == p).map(|s| s.mean_diff);
            if chunked_sets.is_empty() {
                for p in &partitions {
                    let mut row = vec![Cell::text("-"), Cell::text(p.partition.as_str()), Cell::Int(p.support as u64), Cell::Number(Some(p.mean_diff), 4)];
                    row.extend(std::iter::repeat_n(Cell::Rate(None), 6));
                    table.push(row);
                }
            }
            let mut flips_raw = Vec::new();
            let mut plot = Vec::new();
            let part_names = labels(&[R2Partition::Positive.as_str(), R2Partition::Zero.as_str()]);
            for (full, flips, effect_full, effect_chunked) in &chunked_sets {
                let rows: Vec<_> = flips.iter().filter(|f| f.dataset == name).collect();
                for f in &rows {
                    table.push(vec![
                        Cell::text(&full.evaluator),
                        Cell::text(f.partition.as_str()),
                        Cell::Int(f.support as u64),
                        Cell::Number(mean(f.partition), 4),
                        Cell::Int(f.flips_to_zero as u64),
                        Cell::Int(f.flips_to_one as u64),
                        Cell::Rate(f.rate_to_zero),
                        Cell::Rate(f.rate_to_one),
                        Cell::Rate(f.ppr_full),
                        Cell::Rate(f.ppr_chunked),
                    ]);
                }
                let by_part = |sel: fn(&crate::chunking::FlipRow) -> Option<f64>| {
                    [R2Partition::Positive, R2Partition::Zero]
                        .iter()
                        .map(|p| rows.iter().find(|f| f.partition == *p).and_then(|f| sel(f)))
                        .collect()
                };
                plot.push(series(format!("{} 1->0", full.evaluator), part_names.clone(), by_part(|f| f.rate_to_zero)));
                plot.push(series(format!("{} 0->1", full.evaluator), part_names.clone(), by_part(|f| f.rate_to_one)));
                flips_raw.push(json!({
                    "evaluator": full.evaluator,
                    "flips": rows,
                    "effect_full": effect_full.iter().find(|x| x.dataset == name),
                    "effect_chunked": effect_chunked.iter().find(|x| x.dataset == name),
                }));
            }
            e.table(name, &table)?;
            e.json(
                name,
                &json!({
                    "dataset": name,
                    "chunk_limit": cfg_limit,
                    "claims": slice.len(),
                    "multi_chunk_claims": multi_chunk,
                    "partitions": partitions,
                    "evaluators": flips_raw,
                }),
            );
            if !plot.is_empty() {
                e.plot(name, "chunking_flips", plot);
            }
            Ok(())
        })
    }
}
