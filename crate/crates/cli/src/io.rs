use std::io::{BufRead, Write};
use std::path::Path;

use fracheat::{Error, Result};
use nalgebra::DMatrix;

/// `node,label` pairs (comma or whitespace separated, `#` comments).
pub fn read_labels(path: &Path) -> Result<Vec<(usize, usize)>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        let parse = |f: &str| {
            f.parse::<usize>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("'{f}': {e}"),
            })
        };
        match fields.as_slice() {
            [node, label] => out.push((parse(node)?, parse(label)?)),
            // A header line is tolerated.
            _ if lineno == 0 && out.is_empty() && fields.iter().any(|f| f.parse::<usize>().is_err()) => continue,
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: "expected 'node,label'".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Dense label vector of length `n` (unlabeled nodes get class 0) and the
/// sorted labeled node list.
pub fn label_vector(pairs: &[(usize, usize)], n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut labels = vec![0; n];
    let mut labeled = Vec::with_capacity(pairs.len());
    for &(node, label) in pairs {
        if node >= n {
            return Err(Error::IndexOutOfRange { index: node, n });
        }
        labels[node] = label;
        labeled.push(node);
    }
    labeled.sort_unstable();
    labeled.dedup();
    if labeled.len() != pairs.len() {
        return Err(Error::InvalidArgument("a node is labeled more than once".into()));
    }
    Ok((labels, labeled))
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

/// `node,label,score` with the score of the predicted class.
pub fn write_predictions(out: &mut dyn Write, scores: &DMatrix<f64>, predictions: &[usize]) -> Result<()> {
    writeln!(out, "node,label,score")?;
    for (i, &p) in predictions.iter().enumerate() {
        writeln!(out, "{i},{p},{}", scores[(i, p)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_edges(path: &Path, g: &fracheat::Graph) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {} nodes", g.n())?;
    for (i, j, w) in g.edges() {
        writeln!(out, "{i} {j} {w}")?;
    }
    out.flush()?;
    Ok(())
}

/// One number per line (`#` comments allowed).
pub fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(line.parse().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: format!("{e}"),
        })?);
    }
    Ok(out)
}
