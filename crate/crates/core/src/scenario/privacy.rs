/// A serialized artifact to scan, named for reporting.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Shortest secret worth scanning for; shorter strings collide with random
/// ciphertext bytes by chance.
pub const MIN_SECRET_LEN: usize = 8;

/// Counts `(artifact, secret)` pairs where the secret occurs verbatim.
pub fn privacy_scan(artifacts: &[Artifact], secrets: &[Vec<u8>]) -> Vec<(String, usize)> {
    let mut hits = Vec::new();
    for a in artifacts {
        for (i, s) in secrets.iter().enumerate() {
            if s.len() >= MIN_SECRET_LEN && contains(&a.bytes, s) {
                hits.push((a.name.clone(), i));
            }
        }
    }
    hits
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_planted_secret() {
        let secret = b"systolic 121".to_vec();
        let mut bytes = vec![0u8; 100];
        bytes.extend_from_slice(&secret);
        let arts = [
            Artifact { name: "a".into(), bytes },
            Artifact { name: "b".into(), bytes: vec![1; 200] },
        ];
        assert_eq!(privacy_scan(&arts, &[secret, b"short".to_vec()]), vec![("a".to_string(), 0)]);
    }
}
