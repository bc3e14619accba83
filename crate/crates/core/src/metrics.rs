//! Hard-mask dice and vertical cup-to-disc ratio.

use crate::data::{Class, SegmentationMask};
use crate::error::{Error, Result};

/// Which anatomical region a metric refers to. The disc region includes the
/// cup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Cup,
    Disc,
}

impl Region {
    pub fn contains(self, class: Class) -> bool {
        match self {
            Region::Cup => class == Class::Cup,
            Region::Disc => class != Class::Background,
        }
    }
}

fn check_dims(pred: &SegmentationMask, truth: &SegmentationMask) -> Result<()> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(Error::dim(
            "hard_dice",
            format!("{}x{} vs {}x{}", pred.width, pred.height, truth.width, truth.height),
        ));
    }
    Ok(())
}

/// `2|P∩T| / (|P| + |T|)`, or 1 when both regions are empty.
pub fn hard_dice(pred: &SegmentationMask, truth: &SegmentationMask, region: Region) -> Result<f64> {
    check_dims(pred, truth)?;
    let (mut p, mut t, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.labels.iter().zip(&truth.labels) {
        let (ia, ib) = (region.contains(a), region.contains(b));
        p += ia as usize;
        t += ib as usize;
        both += (ia && ib) as usize;
    }
    if p + t == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + t) as f64)
}

fn rows_touching(mask: &SegmentationMask, region: Region) -> usize {
    mask.labels
        .chunks_exact(mask.width)
        .filter(|row| row.iter().any(|&c| region.contains(c)))
        .count()
}

/// Rows containing cup over rows containing disc or cup.
pub fn vertical_cdr(mask: &SegmentationMask) -> Result<f64> {
    let disc = rows_touching(mask, Region::Disc);
    if disc == 0 {
        return Err(Error::UndefinedCdr);
    }
    Ok(rows_touching(mask, Region::Cup) as f64 / disc as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub dice_cup: f64,
    pub dice_disc: f64,
    /// `None` when the disc region is empty.
    pub cdr_pred: Option<f64>,
    pub cdr_true: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub dice_cup: f64,
    pub dice_disc: f64,
    pub cdr_mae: f64,
    /// Images whose CDR was undefined on either side and left out of the MAE.
    pub cdr_undefined: usize,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let dice_cup = rows.iter().map(|r| r.dice_cup).sum::<f64>() / n;
        let dice_disc = rows.iter().map(|r| r.dice_disc).sum::<f64>() / n;
        let errors: Vec<f64> = rows
            .iter()
            .filter_map(|r| Some((r.cdr_pred? - r.cdr_true?).abs()))
            .collect();
        let cdr_mae = if errors.is_empty() {
            0.0
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        };
        EvalReport {
            cdr_undefined: rows.len() - errors.len(),
            rows,
            dice_cup,
            dice_disc,
            cdr_mae,
        }
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
        let mut out = String::from("id,dice_cup,dice_disc,cdr_pred,cdr_true\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{}\n",
                r.id,
                r.dice_cup,
                r.dice_disc,
                fmt(r.cdr_pred),
                fmt(r.cdr_true)
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "images={} dice_cup={:.4} dice_disc={:.4} cdr_mae={:.4} cdr_undefined={}",
            self.rows.len(),
            self.dice_cup,
            self.dice_disc,
            self.cdr_mae,
            self.cdr_undefined
        )
    }
}

fn optional_cdr(mask: &SegmentationMask) -> Result<Option<f64>> {
    match vertical_cdr(mask) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCdr) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores `(id, mask)` predictions against truths with the same ids in the
/// same order.
pub fn evaluate(preds: &[(String, SegmentationMask)], truths: &[(String, SegmentationMask)]) -> Result<EvalReport> {
    if preds.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} ground-truth masks",
            preds.len(),
            truths.len()
        )));
    }
    let mut rows = Vec::with_capacity(preds.len());
    for ((pid, pred), (tid, truth)) in preds.iter().zip(truths) {
        if pid != tid {
            return Err(Error::Contract(format!("prediction id {pid} does not match {tid}")));
        }
        rows.push(EvalRow {
            id: pid.clone(),
            dice_cup: hard_dice(pred, truth, Region::Cup)?,
            dice_disc: hard_dice(pred, truth, Region::Disc)?,
            cdr_pred: optional_cdr(pred)?,
            cdr_true: optional_cdr(truth)?,
        });
    }
    Ok(EvalReport::from_rows(rows))
}
