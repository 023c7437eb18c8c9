//! Flattens the JSON documents of `report` into one long CSV.

use serde_json::Value;

/// Lag of the first element of every array in a family's document.
fn first_lag(family: &str) -> usize {
    match family {
        "stats" | "spread" => 0,
        _ => 1,
    }
}

fn unit(doc: &Value, quantity: &str) -> String {
    doc["units"][quantity].as_str().unwrap_or("dimensionless").to_string()
}

fn number(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => Some(n.to_string()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `family,quantity,series,lag,value,units`, one row per array element or
/// scalar. Arrays of non-numbers are skipped; missing values are empty.
pub fn curves_csv(families: &[(&str, &Value)]) -> String {
    let mut out = String::from("family,quantity,series,lag,value,units\n");
    let mut row = |f: &str, q: &str, s: &str, lag: Option<usize>, v: String, u: &str| {
        let lag = lag.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!("{f},{},{},{lag},{v},{}\n", field(q), field(s), field(u)));
    };
    for (family, doc) in families {
        let Some(obj) = doc.as_object() else { continue };
        let l0 = first_lag(family);
        for (q, v) in obj {
            if matches!(q.as_str(), "meta" | "units" | "lags") {
                continue;
            }
            let u = unit(doc, q);
            match v {
                Value::Array(a) if a.iter().all(|x| number(x).is_some()) => {
                    for (i, x) in a.iter().enumerate() {
                        row(family, q, "", Some(l0 + i), number(x).unwrap(), &u);
                    }
                }
                Value::Object(m) => {
                    for (s, x) in m {
                        match x {
                            Value::Array(a) if a.iter().all(|y| number(y).is_some()) => {
                                for (i, y) in a.iter().enumerate() {
                                    row(family, q, s, Some(l0 + i), number(y).unwrap(), &u);
                                }
                            }
                            _ => {
                                if let Some(n) = number(x) {
                                    row(family, q, s, None, n, &u);
                                }
                            }
                        }
                    }
                }
                _ => {
                    if let Some(n) = number(v) {
                        row(family, q, "", None, n, &u);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn arrays_maps_and_scalars() {
        let doc = json!({
            "units": {"G": "ticks"},
            "lags": [1, 2],
            "G": {"MOP": [0.5, null]},
            "residual": 0.25,
            "note": "skipped",
        });
        let csv = curves_csv(&[("propagator", &doc)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines,
            [
                "family,quantity,series,lag,value,units",
                "propagator,G,MOP,1,0.5,ticks",
                "propagator,G,MOP,2,,ticks",
                "propagator,residual,,,0.25,dimensionless",
            ]
        );
    }
}
