use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Output directory plus the provenance line stamped on every artifact.
pub struct Outputs {
    pub dir: PathBuf,
    pub hash: String,
}

impl Outputs {
    pub fn new(dir: &Path, hash: String) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn hash_comment(&self) -> String {
        format!("config sha256:{}", self.hash)
    }

    /// CSV writer whose file starts with `# <version>` and the hash comment.
    pub fn csv(&self, name: &str, version: &str, header: &[&str]) -> Result<CsvOut> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# {version}")?;
        writeln!(out, "# {}", self.hash_comment())?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(header)?;
        Ok(CsvOut { writer, path })
    }

    /// Plain text file starting with `# <version>` and the hash comment.
    pub fn text(&self, name: &str, version: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, format!("# {version}\n# {}\n{body}", self.hash_comment()))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub struct CsvOut {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl CsvOut {
    pub fn row<I, S>(&mut self, record: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(record).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().with_context(|| format!("writing {}", self.path.display()))?;
        Ok(self.path)
    }
}

/// Header comments of a file: leading lines starting with `#`, without the
/// marker.
pub fn leading_comments(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .collect())
}
