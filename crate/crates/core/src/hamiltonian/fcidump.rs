//! Molpro-style FCIDUMP parsing and serialization.
//!
//! Header: `&FCI NORB=..., NELEC=..., MS2=..., ...` terminated by `&END` or
//! `/`. Data lines are `value i j k l` with 1-based spatial indices:
//! `i j k l` sets the chemist-notation integral (ij|kl), `i j 0 0` sets
//! h_ij, and `0 0 0 0` sets the core energy. ORBSYM and ISYM are parsed
//! and ignored; UHF dumps are rejected.

use super::{HamError, IntegralStore};
use crate::conf::OrbitalSpace;
use std::collections::HashMap;
use std::io::BufRead;

fn parse_value(token: &str, line: usize) -> Result<f64, HamError> {
    // Fortran dumps use D exponents.
    let norm = token.replace(['D', 'd'], "E");
    norm.parse::<f64>().map_err(|_| HamError::Parse {
        line,
        msg: format!("non-numeric value token '{token}'"),
    })
}

fn parse_index(token: &str, line: usize, norb: usize) -> Result<usize, HamError> {
    let idx: usize = token.parse().map_err(|_| HamError::Parse {
        line,
        msg: format!("non-numeric index token '{token}'"),
    })?;
    if idx > norb {
        return Err(HamError::Parse {
            line,
            msg: format!("orbital index {idx} out of range (NORB = {norb})"),
        });
    }
    Ok(idx)
}

struct Header {
    norb: usize,
    nelec: usize,
    end_line: usize,
}

fn parse_header(lines: &[(usize, String)]) -> Result<Header, HamError> {
    let (first_line, first) = lines.first().ok_or(HamError::Parse {
        line: 0,
        msg: "empty input".into(),
    })?;
    if !first.trim_start().to_uppercase().starts_with("&FCI") {
        return Err(HamError::Parse {
            line: *first_line,
            msg: "expected header starting with &FCI".into(),
        });
    }
    let mut text = String::new();
    let mut end_line = 0;
    for (lineno, line) in lines {
        let upper = line.to_uppercase();
        let done = upper.contains("&END") || line.trim_end().ends_with('/');
        let cleaned = upper.replace("&END", "").replace('/', "");
        text.push(' ');
        text.push_str(&cleaned);
        end_line = *lineno;
        if done {
            break;
        }
        if *lineno == lines.last().unwrap().0 {
            return Err(HamError::Parse {
                line: *lineno,
                msg: "header not terminated by &END or /".into(),
            });
        }
    }
    let text = text.replacen("&FCI", "", 1);

    let mut fields: HashMap<String, String> = HashMap::new();
    // Key=value pairs; values may be comma-separated lists (ORBSYM).
    for chunk in text.split(',') {
        if let Some((key, value)) = chunk.split_once('=') {
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        // Continuation of a list value (e.g. ORBSYM entries): ignored.
    }
    let get_usize = |key: &str| -> Result<Option<usize>, HamError> {
        match fields.get(key) {
            None => Ok(None),
            Some(v) => v
                .split_whitespace()
                .next()
                .unwrap_or("")
                .parse::<usize>()
                .map(Some)
                .map_err(|_| HamError::Parse {
                    line: end_line,
                    msg: format!("malformed header field {key}={v}"),
                }),
        }
    };
    if let Some(uhf) = get_usize("IUHF")? {
        if uhf != 0 {
            return Err(HamError::Uhf);
        }
    }
    let norb = get_usize("NORB")?.ok_or(HamError::Parse {
        line: end_line,
        msg: "header missing NORB".into(),
    })?;
    let nelec = get_usize("NELEC")?.ok_or(HamError::Parse {
        line: end_line,
        msg: "header missing NELEC".into(),
    })?;
    if norb == 0 {
        return Err(HamError::Parse { line: end_line, msg: "NORB must be positive".into() });
    }
    Ok(Header { norb, nelec, end_line })
}

/// Parses an FCIDUMP stream into an integral store and the matching
/// orbital space (m = 2 * NORB spin orbitals).
pub fn parse_fcidump<R: BufRead>(reader: R) -> Result<(IntegralStore, OrbitalSpace), HamError> {
    let lines: Vec<(usize, String)> = reader
        .lines()
        .enumerate()
        .map(|(i, l)| {
            l.map(|s| (i + 1, s)).map_err(|e| HamError::Parse {
                line: i + 1,
                msg: format!("read failure: {e}"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let header = parse_header(&lines)?;
    let mut store = IntegralStore::new(header.norb);
    let space = OrbitalSpace::new(2 * header.norb, header.nelec)
        .map_err(|e| HamError::Parse { line: header.end_line, msg: e.to_string() })?;

    // Slot id -> (value, first line), for conflicting-duplicate detection.
    let mut seen: HashMap<(usize, usize, usize, usize), (f64, usize)> = HashMap::new();

    for (lineno, line) in lines.iter().skip_while(|(n, _)| *n <= header.end_line) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(HamError::Parse {
                line: *lineno,
                msg: format!("expected 'value i j k l', got {} tokens", tokens.len()),
            });
        }
        let value = parse_value(tokens[0], *lineno)?;
        if !value.is_finite() {
            return Err(HamError::Parse { line: *lineno, msg: "non-finite value".into() });
        }
        let i = parse_index(tokens[1], *lineno, header.norb)?;
        let j = parse_index(tokens[2], *lineno, header.norb)?;
        let k = parse_index(tokens[3], *lineno, header.norb)?;
        let l = parse_index(tokens[4], *lineno, header.norb)?;

        let key = canonical_key(i, j, k, l, *lineno)?;
        if let Some((prev, prev_line)) = seen.get(&key) {
            if *prev != value {
                return Err(HamError::Parse {
                    line: *lineno,
                    msg: format!(
                        "conflicting duplicate entry for indices {i} {j} {k} {l} \
                         (first set to {prev} at line {prev_line})"
                    ),
                });
            }
            continue;
        }
        seen.insert(key, (value, *lineno));

        match (i, j, k, l) {
            (0, 0, 0, 0) => store.set_e_core(value),
            (i, j, 0, 0) if i > 0 && j > 0 => store.set_h(i - 1, j - 1, value),
            (i, j, k, l) if i > 0 && j > 0 && k > 0 && l > 0 => {
                store.set_eri(i - 1, j - 1, k - 1, l - 1, value)
            }
            _ => {
                return Err(HamError::Parse {
                    line: *lineno,
                    msg: format!("unsupported index pattern {i} {j} {k} {l}"),
                })
            }
        }
    }
    Ok((store, space))
}

fn canonical_key(
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    line: usize,
) -> Result<(usize, usize, usize, usize), HamError> {
    match (i, j, k, l) {
        (0, 0, 0, 0) => Ok((0, 0, 0, 0)),
        (i, j, 0, 0) if i > 0 && j > 0 => {
            let (a, b) = if i >= j { (i, j) } else { (j, i) };
            Ok((a, b, 0, 0))
        }
        (i, j, k, l) if i > 0 && j > 0 && k > 0 && l > 0 => {
            let ij = if i >= j { (i, j) } else { (j, i) };
            let kl = if k >= l { (k, l) } else { (l, k) };
            let (ab, cd) = if ij >= kl { (ij, kl) } else { (kl, ij) };
            Ok((ab.0, ab.1, cd.0, cd.1))
        }
        _ => Err(HamError::Parse {
            line,
            msg: format!("unsupported index pattern {i} {j} {k} {l}"),
        }),
    }
}

/// Serializes a store back to FCIDUMP text. Only canonical nonzero entries
/// are written; re-parsing yields an identical store.
pub fn serialize_fcidump(store: &IntegralStore, space: &OrbitalSpace) -> String {
    let n = store.n_spatial();
    let mut out = String::new();
    out.push_str(&format!(
        "&FCI NORB={}, NELEC={}, MS2=0,\n  ORBSYM={}\n  ISYM=1,\n&END\n",
        n,
        space.n_elec,
        "1,".repeat(n)
    ));
    for i in 0..n {
        for j in 0..=i {
            for k in 0..=i {
                for l in 0..=k {
                    if tri_pair(i, j) < tri_pair(k, l) {
                        continue;
                    }
                    let v = store.eri(i, j, k, l);
                    if v != 0.0 {
                        out.push_str(&format!(
                            "{:24.16E} {} {} {} {}\n",
                            v,
                            i + 1,
                            j + 1,
                            k + 1,
                            l + 1
                        ));
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = store.h(i, j);
            if v != 0.0 {
                out.push_str(&format!("{:24.16E} {} {} 0 0\n", v, i + 1, j + 1));
            }
        }
    }
    if store.e_core() != 0.0 {
        out.push_str(&format!("{:24.16E} 0 0 0 0\n", store.e_core()));
    }
    out
}

fn tri_pair(i: usize, j: usize) -> usize {
    let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "&FCI NORB=4, NELEC=2, MS2=0,\n ORBSYM=1,1,1,1,\n ISYM=1,\n&END\n\
                         0.5 1 1 0 0\n\
                         -1.2 0 0 0 0\n\
                         0.25 1 2 1 2\n";

    #[test]
    fn parses_header_and_entries() {
        let (store, space) = parse_fcidump(SMALL.as_bytes()).unwrap();
        assert_eq!(space.m, 8);
        assert_eq!(space.n_elec, 2);
        assert_eq!(store.h(0, 0), 0.5);
        assert_eq!(store.e_core(), -1.2);
        assert_eq!(store.eri(0, 1, 0, 1), 0.25);
        assert_eq!(store.eri(1, 0, 1, 0), 0.25);
    }

    #[test]
    fn rejects_malformed_header() {
        let err = parse_fcidump("NORB=2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, HamError::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_non_numeric_token() {
        let text = "&FCI NORB=2, NELEC=2 &END\nabc 1 1 0 0\n";
        let err = parse_fcidump(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("non-numeric"));
    }

    #[test]
    fn rejects_out_of_range_index() {
        let text = "&FCI NORB=2, NELEC=2 &END\n0.5 3 1 0 0\n";
        let err = parse_fcidump(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn rejects_conflicting_duplicates_with_line_number() {
        let text = "&FCI NORB=2, NELEC=2 &END\n0.5 1 1 0 0\n0.6 1 1 0 0\n";
        let err = parse_fcidump(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("conflicting"), "{msg}");
    }

    #[test]
    fn symmetric_duplicates_with_equal_values_are_fine() {
        let text = "&FCI NORB=2, NELEC=2 &END\n0.5 1 2 0 0\n0.5 2 1 0 0\n";
        assert!(parse_fcidump(text.as_bytes()).is_ok());
    }

    #[test]
    fn rejects_uhf() {
        let text = "&FCI NORB=2, NELEC=2, IUHF=1 &END\n";
        assert!(matches!(parse_fcidump(text.as_bytes()), Err(HamError::Uhf)));
    }

    #[test]
    fn serialize_round_trip() {
        let (store, space) = parse_fcidump(SMALL.as_bytes()).unwrap();
        let text = serialize_fcidump(&store, &space);
        let (again, space2) = parse_fcidump(text.as_bytes()).unwrap();
        assert_eq!(store, again);
        assert_eq!(space, space2);
    }
}
