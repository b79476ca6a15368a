//! Parsing of comma-separated command-line lists.
//!
//! A list may end in `...,last` (or `…,last`): the first two items then set
//! a geometric progression when the second is an integer multiple of the
//! first greater than one, and an arithmetic one otherwise.

pub fn parse_u64_list(s: &str) -> Result<Vec<u64>, String> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return Err("empty list".into());
    }
    let num = |t: &str| t.parse::<u64>().map_err(|_| format!("'{t}' is not a nonnegative integer"));
    let Some(dots) = items.iter().position(|t| *t == "..." || *t == "…") else {
        return items.iter().map(|t| num(t)).collect();
    };
    if dots < 2 || dots + 2 != items.len() {
        return Err("'...' needs two items before it and exactly one after".into());
    }
    let head: Vec<u64> = items[..dots].iter().map(|t| num(t)).collect::<Result<_, _>>()?;
    let last = num(items[dots + 1])?;
    let (a, b) = (head[0], head[1]);
    let geometric = a > 0 && b > a && b % a == 0 && b / a > 1 && head.windows(2).all(|w| w[1] == w[0] * (b / a));
    let mut out = head.clone();
    let mut cur = *head.last().expect("two items");
    loop {
        let next = if geometric {
            cur.checked_mul(b / a)
        } else if b > a {
            cur.checked_add(b - a)
        } else {
            return Err("progression must increase".into());
        };
        match next {
            Some(v) if v <= last => {
                out.push(v);
                cur = v;
            }
            _ => break,
        }
    }
    if *out.last().expect("nonempty") != last {
        return Err(format!("progression does not reach {last}"));
    }
    Ok(out)
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    parse_u64_list(s)?.into_iter().map(|v| usize::try_from(v).map_err(|_| format!("{v} is too large"))).collect()
}
