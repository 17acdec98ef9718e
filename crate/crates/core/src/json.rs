//! JSON helpers: non-finite floats are written as the strings "nan", "inf"
//! and "-inf" instead of `null`.

use serde::Serializer;

pub fn f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_nan() {
        s.serialize_str("nan")
    } else if x.is_infinite() {
        s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*x)
    }
}

pub fn opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => f64(v, s),
        None => s.serialize_none(),
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_string<T: serde::Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("report types always serialize");
    out.push('\n');
    out
}

/// Format a float for CSV output; shortest representation that round-trips.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use serde::Serialize;

    #[derive(Serialize)]
    struct R {
        #[serde(serialize_with = "super::f64")]
        a: f64,
        #[serde(serialize_with = "super::f64")]
        b: f64,
        #[serde(serialize_with = "super::f64")]
        c: f64,
    }

    #[test]
    fn non_finite_as_strings() {
        let s = serde_json::to_string(&R { a: f64::NAN, b: f64::INFINITY, c: 1.5 }).unwrap();
        assert_eq!(s, r#"{"a":"nan","b":"inf","c":1.5}"#);
    }
}
