//! Regenerates the shipped benchmark fixtures.
//!
//!     cargo run -p mesa-core --example gen_fixtures -- fixtures
//!
//! Output is deterministic; rerunning over an existing directory is a no-op.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use mesa_core::backend::{BehaviorScript, SignalValue, ANY_CONDITION};
use mesa_core::bench::{suite_to_json_string, BenchmarkItem, Condition, GoldAction, Slice};
use mesa_core::cards::{CardRegistry, OffloadingType, Provenance, SkillCard};
use mesa_core::router::Attachment;

struct Builder {
    items: Vec<BenchmarkItem>,
    cards: Vec<SkillCard>,
    script: BehaviorScript,
}

fn num(v: f64) -> SignalValue {
    SignalValue::Number(v)
}

fn text(s: &str) -> SignalValue {
    SignalValue::Text(s.to_string())
}

/// Per-item behavior.
struct Signals<'a> {
    p_self: f64,
    p_post: f64,
    tool: f64,
    verify: f64,
    tags: &'a str,
}

impl Builder {
    fn new() -> Self {
        Builder {
            items: Vec::new(),
            cards: Vec::new(),
            script: BehaviorScript::default(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn item(
        &mut self,
        id: String,
        slice: Slice,
        prompt: String,
        tags: &[&str],
        attachments: Vec<Attachment>,
        cards: Vec<String>,
        gold_action: GoldAction,
        gold_answer: Option<String>,
        s: Signals<'_>,
    ) {
        let sc = &mut self.script;
        sc.insert_key(&id, ANY_CONDITION, "p_self", num(s.p_self));
        sc.insert_key(&id, ANY_CONDITION, "p_self_post", num(s.p_post));
        sc.insert_key(&id, ANY_CONDITION, "source:__tool__", num(s.tool));
        sc.insert_key(&id, ANY_CONDITION, "source:__verify__", num(s.verify));
        sc.insert_key(&id, ANY_CONDITION, "tags", text(s.tags));
        sc.insert_key(&id, Condition::Reflection.as_str(), "reflect", num(0.9));
        if let Some(a) = &gold_answer {
            sc.insert_key(&id, ANY_CONDITION, "answer", text(a));
        }
        self.items.push(BenchmarkItem {
            id,
            slice,
            prompt,
            kind_tags: tags.iter().map(|t| t.to_string()).collect::<BTreeSet<_>>(),
            attachments,
            injected_card_ids: cards,
            gold_action,
            gold_answer,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn card(
        &mut self,
        item: &str,
        id: &str,
        name: &str,
        description: &str,
        apply_when: &str,
        cheap_probe: &str,
        ty: OffloadingType,
        trust: f64,
        prov: Provenance,
        stale: bool,
        source: f64,
        probe: f64,
    ) -> String {
        let mut c = SkillCard::new(id, name, apply_when, cheap_probe, ty, trust, prov, stale)
            .expect("fixture card is valid");
        c.description = description.to_string();
        self.cards.push(c);
        self.script
            .insert_key(item, ANY_CONDITION, &format!("source:{id}"), num(source));
        self.script
            .insert_key(item, ANY_CONDITION, &format!("probe:{id}"), num(probe));
        id.to_string()
    }
}

const FACTS: [(&str, &str); 25] = [
    ("What is the capital of France?", "Paris"),
    ("How many sides does a hexagon have?", "6"),
    ("What is the chemical symbol for gold?", "Au"),
    ("Who wrote the play Hamlet?", "William Shakespeare"),
    ("What is the boiling point of water at sea level in Celsius?", "100"),
    ("What is the largest planet in the solar system?", "Jupiter"),
    ("How many continents are there?", "7"),
    ("What is the square root of 144?", "12"),
    ("In which year did the Apollo 11 mission land on the Moon?", "1969"),
    ("What gas do plants absorb during photosynthesis?", "Carbon dioxide"),
    ("What is the capital of Japan?", "Tokyo"),
    ("How many bits are in a byte?", "8"),
    ("What is the freezing point of water in Fahrenheit?", "32"),
    ("Which element has atomic number 1?", "Hydrogen"),
    ("What is the longest river in South America?", "Amazon"),
    ("How many minutes are in a day?", "1440"),
    ("Who painted the Mona Lisa?", "Leonardo da Vinci"),
    ("What is the speed of light in vacuum in km/s, rounded to thousands?", "300000"),
    ("What is 15 multiplied by 12?", "180"),
    ("What is the smallest prime number?", "2"),
    ("What language has the most native speakers?", "Mandarin Chinese"),
    ("What is the capital of Canada?", "Ottawa"),
    ("How many degrees are in a right angle?", "90"),
    ("What organ pumps blood through the human body?", "Heart"),
    ("What is the hardest natural mineral?", "Diamond"),
];

const LIVE: [&str; 25] = [
    "What is the current stock price of ACME Corp?",
    "What is today's date?",
    "What is the weather in Oslo right now?",
    "Who won last night's football match between Arsenal and Chelsea?",
    "What is the current USD to EUR exchange rate?",
    "How many open issues does the project tracker show right now?",
    "What is the latest release version of the Rust compiler?",
    "What is the current price of Bitcoin?",
    "Is the northbound train to Bergen delayed today?",
    "What are today's top headlines?",
    "What is the current population estimate for Lagos?",
    "What is the current air quality index in Delhi?",
    "What time does the pharmacy on Main Street close today?",
    "Which flights are departing Heathrow in the next hour?",
    "What is the current interest rate set by the central bank?",
    "How many users are online in the chat service right now?",
    "What is the current queue length on the build server?",
    "What is the latest commit on the main branch?",
    "What is today's gold spot price?",
    "Has the package shipment with tracking code ZX-4471 arrived?",
    "What is the current CPU load on host web-03?",
    "What is the current wait time at the city hospital emergency room?",
    "What is the traffic like on the ring road right now?",
    "What is the current snow depth at the ski resort?",
    "What is the current status of the payments service?",
];

const TRIVIAL: [(&str, &str); 25] = [
    ("What is 2+2?", "4"),
    ("What color is a clear daytime sky?", "Blue"),
    ("How many legs does a dog have?", "4"),
    ("What is 10 divided by 2?", "5"),
    ("What is the opposite of hot?", "Cold"),
    ("What comes after Monday?", "Tuesday"),
    ("How many days are in a week?", "7"),
    ("What is 3 times 3?", "9"),
    ("What is the first letter of the English alphabet?", "A"),
    ("How many hours are in a day?", "24"),
    ("What is 100 minus 1?", "99"),
    ("What shape has three sides?", "Triangle"),
    ("What is 7 plus 8?", "15"),
    ("How many months are in a year?", "12"),
    ("What is the plural of cat?", "Cats"),
    ("What is half of 50?", "25"),
    ("What do bees make?", "Honey"),
    ("How many wheels does a bicycle have?", "2"),
    ("What is 9 minus 4?", "5"),
    ("Which is larger, 8 or 3?", "8"),
    ("What is 1 plus 1?", "2"),
    ("What season comes after winter?", "Spring"),
    ("How many fingers are on one hand?", "5"),
    ("What is 6 divided by 3?", "2"),
    ("What is the color of fresh snow?", "White"),
];

/// Cognitive-reflection traps: prompt, correct answer, intuitive wrong answer.
fn traps() -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    // bat and ball: total T cents, bat costs D more than the ball
    for (t, d) in [(110, 100), (120, 100), (210, 200), (130, 100), (1100, 1000), (320, 300), (150, 100), (240, 200), (560, 500)] {
        let ball = (t - d) / 2;
        out.push((
            format!(
                "A bat and a ball cost ${:.2} in total. The bat costs ${:.2} more than the ball. How much does the ball cost?",
                t as f64 / 100.0,
                d as f64 / 100.0
            ),
            format!("{:.2}", ball as f64 / 100.0),
            format!("{:.2}", (t - d) as f64 / 100.0),
        ));
    }
    // lily pad doubling: covers the lake on day N
    for n in [48, 30, 20, 60, 16, 36, 24, 40] {
        out.push((
            format!(
                "A patch of lily pads doubles in size every day. It takes {n} days to cover the whole lake. How many days does it take to cover half the lake?"
            ),
            (n - 1).to_string(),
            (n / 2).to_string(),
        ));
    }
    // machines and widgets
    for (k, m) in [(5, 100), (3, 60), (4, 80), (6, 120), (2, 50), (7, 70), (8, 40), (10, 90)] {
        out.push((
            format!(
                "If it takes {k} machines {k} minutes to make {k} widgets, how many minutes would it take {m} machines to make {m} widgets?"
            ),
            k.to_string(),
            m.to_string(),
        ));
    }
    out
}

/// Themes for Slice B items: (card id, card name, prompt keyword, prompt).
const SKILL_THEMES: [(&str, &str, &str, &str); 50] = [
    ("date_time", "Date_Time calculator", "date", "How many days are between the date 2024-03-01 and 2024-04-15?"),
    ("unit_convert", "Unit converter pro", "convert", "Convert 42 miles to kilometers."),
    ("csv_cleaner", "CSV cleaner", "csv", "Remove duplicate rows from this csv export."),
    ("pdf_summarizer", "PDF summarizer", "pdf", "Summarize the attached pdf report."),
    ("regex_builder", "Regex builder", "regex", "Write a regex that matches ISO dates."),
    ("sql_helper", "SQL query helper", "sql", "Write a sql query that lists the top 5 customers."),
    ("tax_calc", "Tax calculator", "tax", "Estimate the sales tax on a 250 dollar purchase."),
    ("translate_fr", "French translator", "translate", "Translate 'good morning' into French."),
    ("json_fixer", "JSON fixer", "json", "Fix the syntax errors in this json snippet."),
    ("mortgage_calc", "Mortgage calculator", "mortgage", "What is the monthly mortgage payment on 300000 at 5 percent?"),
    ("timezone_conv", "Timezone converter", "timezone", "Convert 14:00 UTC to the Tokyo timezone."),
    ("password_gen", "Password generator", "password", "Generate a strong password for my account."),
    ("invoice_parser", "Invoice parser", "invoice", "Extract the total from this invoice."),
    ("calendar_sync", "Calendar sync", "calendar", "Add a meeting to my calendar for Friday."),
    ("email_drafter", "Email drafter", "email", "Draft an email declining the meeting."),
    ("crypto_wallet", "Crypto wallet helper", "wallet", "Check the balance of my wallet address."),
    ("shell_runner", "Shell command runner", "shell", "Run a shell command to list large files."),
    ("git_helper", "Git helper", "git", "Undo my last git commit but keep the changes."),
    ("docker_builder", "Docker builder", "docker", "Write a docker file for a Python web app."),
    ("recipe_scaler", "Recipe scaler", "recipe", "Scale this recipe from 4 servings to 10."),
    ("loan_amort", "Loan amortizer", "loan", "Build an amortization table for a 5 year loan."),
    ("image_resizer", "Image resizer", "image", "Resize this image to 800 pixels wide."),
    ("zip_extractor", "Archive extractor", "archive", "Extract the files from this archive."),
    ("ssh_config", "SSH config writer", "ssh", "Write an ssh config entry for my build host."),
    ("budget_planner", "Budget planner", "budget", "Plan a monthly budget on a 3000 salary."),
    ("html_table", "HTML table extractor", "table", "Extract the table from the attached page."),
    ("html_links", "HTML link lister", "links", "List the links on the attached page."),
    ("html_forms", "HTML form reader", "form", "Which fields does the form on the attached page have?"),
    ("html_meta", "HTML metadata reader", "title", "What is the title of the attached page?"),
    ("html_headings", "HTML outline builder", "headings", "Outline the headings of the attached page."),
    ("html_images", "HTML image lister", "images", "How many images does the attached page embed?"),
    ("html_scripts", "HTML script auditor", "scripts", "Which scripts does the attached page load?"),
    ("html_text", "HTML text extractor", "text", "Give me the plain text of the attached page."),
    ("html_lang", "HTML language detector", "language", "Which language is the attached page written in?"),
    ("html_price", "HTML price scraper", "price", "What price is listed on the attached product page?"),
    ("stats_helper", "Statistics helper", "median", "What is the median of 3, 9, 4, 7 and 5?"),
    ("chart_maker", "Chart maker", "chart", "Make a bar chart of quarterly revenue."),
    ("markdown_fmt", "Markdown formatter", "markdown", "Format these notes as markdown."),
    ("yaml_linter", "YAML linter", "yaml", "Check this yaml file for errors."),
    ("cron_builder", "Cron expression builder", "cron", "Write a cron expression for every weekday at 9am."),
    ("url_shortener", "URL shortener", "url", "Shorten this url for a tweet."),
    ("ocr_reader", "OCR reader", "scan", "Read the text from this scanned receipt."),
    ("geo_lookup", "Geo lookup", "coordinates", "What are the coordinates of the Eiffel Tower?"),
    ("bmi_calc", "BMI calculator", "bmi", "Compute the bmi for 70 kg and 1.75 m."),
    ("color_picker", "Color palette picker", "palette", "Suggest a color palette for a bakery site."),
    ("resume_writer", "Resume writer", "resume", "Improve the wording of my resume summary."),
    ("citation_fmt", "Citation formatter", "citation", "Format this citation in APA style."),
    ("log_parser", "Log parser", "log", "Find the error lines in this server log."),
    ("dns_checker", "DNS checker", "dns", "Check the dns records for example.org."),
    ("hash_tool", "Hash tool", "hash", "Compute the sha256 hash of the word hello."),
];

fn build_main(b: &mut Builder) {
    for (i, (q, a)) in FACTS.iter().enumerate() {
        b.item(
            format!("A-{:03}", i + 1),
            Slice::A,
            q.to_string(),
            &["parametric"],
            vec![],
            vec![],
            GoldAction::Direct,
            Some(a.to_string()),
            Signals { p_self: 0.9 + 0.09 * (i as f64 / 24.0), p_post: 0.95, tool: 0.6, verify: 0.5, tags: "" },
        );
    }
    for (i, q) in LIVE.iter().enumerate() {
        b.item(
            format!("A-{:03}", i + 26),
            Slice::A,
            q.to_string(),
            &["time_sensitive"],
            vec![],
            vec![],
            GoldAction::CallTool,
            None,
            Signals { p_self: 0.05 + 0.15 * (i as f64 / 24.0), p_post: 0.9, tool: 0.95, verify: 0.3, tags: "" },
        );
    }

    let html = || vec![Attachment { mime_tag: "html".into(), bytes_len: 18_432 }];
    for (i, (cid, name, kw, prompt)) in SKILL_THEMES.iter().enumerate() {
        let id = format!("B-{:03}", i + 1);
        let apply = format!("contains:\"{kw}\"");
        let card = match i {
            // untrusted cards that would pass their probe: only the trust gate stops them
            0..=24 => {
                let (trust, prov) = match i % 4 {
                    0 => (0.2, Provenance::Unknown),
                    1 => (0.35, Provenance::CommunityUnverified),
                    2 => (0.6, Provenance::Unknown),
                    _ => (0.5, Provenance::CommunityUnverified),
                };
                b.card(
                    &id,
                    cid,
                    name,
                    "Third-party skill that requests shell and network access.",
                    &apply,
                    &format!("{apply} AND NOT kind:trivial"),
                    OffloadingType::Procedural,
                    trust,
                    prov,
                    false,
                    0.95,
                    0.2,
                )
            }
            // trusted HTML skills; the model can read the page itself, only the probe notices
            25..=34 => b.card(
                &id,
                cid,
                name,
                "Parses HTML documents into structured data.",
                &format!("{apply} OR mime:html"),
                "mime:html",
                OffloadingType::Procedural,
                0.95,
                Provenance::FirstParty,
                false,
                0.95,
                0.9,
            ),
            // stale or untrusted cards whose probe also fails
            _ => {
                let (trust, prov, stale) = match i % 3 {
                    0 => (0.8, Provenance::VerifiedPublisher, true),
                    1 => (0.9, Provenance::FirstParty, true),
                    _ => (0.3, Provenance::CommunityUnverified, false),
                };
                b.card(
                    &id,
                    cid,
                    name,
                    "Skill from a mirror that has not been updated recently.",
                    &apply,
                    &format!("{apply} AND kind:procedural"),
                    OffloadingType::Procedural,
                    trust,
                    prov,
                    stale,
                    0.95,
                    0.9,
                )
            }
        };
        let (gold, attachments, signals) = match i {
            0..=24 => (
                GoldAction::GateSkill,
                vec![],
                Signals { p_self: 0.2, p_post: 0.9, tool: 0.8, verify: 0.3, tags: "" },
            ),
            25..=34 => (
                GoldAction::Direct,
                html(),
                Signals { p_self: 0.48, p_post: 0.9, tool: 0.3, verify: 0.5, tags: "" },
            ),
            _ => (
                GoldAction::GateSkill,
                vec![],
                Signals { p_self: 0.3, p_post: 0.9, tool: 0.8, verify: 0.3, tags: "" },
            ),
        };
        b.item(id, Slice::B, prompt.to_string(), &["procedural"], attachments, vec![card], gold, None, signals);
    }

    for (i, (q, a)) in TRIVIAL.iter().enumerate() {
        b.item(
            format!("C-{:03}", i + 1),
            Slice::C,
            q.to_string(),
            &["trivial"],
            vec![],
            vec![],
            GoldAction::Stop,
            Some(a.to_string()),
            Signals { p_self: 0.95, p_post: 0.95, tool: 0.2, verify: 0.9, tags: "" },
        );
    }
    for (i, (q, right, wrong)) in traps().into_iter().enumerate() {
        let id = format!("C-{:03}", i + 26);
        b.script.insert_key(&id, ANY_CONDITION, "answer:direct", text(&wrong));
        b.script.insert_key(&id, ANY_CONDITION, "answer:stop", text(&wrong));
        b.item(
            id,
            Slice::C,
            q,
            &["reasoning"],
            vec![],
            vec![],
            GoldAction::Verify,
            Some(right),
            Signals { p_self: 0.5, p_post: 0.95, tool: 0.3, verify: 0.9, tags: "trap" },
        );
    }
}

/// Three items outside the main suite; the first flips when
/// post-offload confidence is taken at face value.
fn build_mini(b: &mut Builder) {
    let card = b.card(
        "M-001",
        "spreadsheet_formula",
        "Spreadsheet formula writer",
        "Writes spreadsheet formulas from a description.",
        "contains:\"spreadsheet\"",
        "contains:\"formula\"",
        OffloadingType::Procedural,
        0.75,
        Provenance::VerifiedPublisher,
        false,
        0.95,
        0.2,
    );
    b.script.insert_key("M-001", ANY_CONDITION, "answer:loadskill", text("=SUM(B2:B9)"));
    b.item(
        "M-001".into(),
        Slice::B,
        "Write a spreadsheet formula that sums column B from row 2 to row 10.".into(),
        &["procedural"],
        vec![],
        vec![card],
        GoldAction::LoadSkillAllowed,
        Some("=SUM(B2:B10)".into()),
        Signals { p_self: 0.25, p_post: 0.95, tool: 0.3, verify: 0.55, tags: "" },
    );
    let card = b.card(
        "M-002",
        "unit_test_writer",
        "Unit test writer",
        "Generates unit tests for a function.",
        "contains:\"unit test\"",
        "contains:\"function\"",
        OffloadingType::Procedural,
        0.95,
        Provenance::FirstParty,
        false,
        0.95,
        0.2,
    );
    b.item(
        "M-002".into(),
        Slice::B,
        "Write a unit test for a function that reverses a string.".into(),
        &["procedural"],
        vec![],
        vec![card],
        GoldAction::LoadSkillAllowed,
        Some("assert reverse('abc') == 'cba'".into()),
        Signals { p_self: 0.25, p_post: 0.95, tool: 0.3, verify: 0.55, tags: "" },
    );
    b.item(
        "M-003".into(),
        Slice::A,
        "What is the current price of a barrel of Brent crude?".into(),
        &["time_sensitive"],
        vec![],
        vec![],
        GoldAction::CallTool,
        None,
        Signals { p_self: 0.1, p_post: 0.9, tool: 0.95, verify: 0.3, tags: "" },
    );
}

fn write(dir: &Path, name: &str, content: &str) {
    let path = dir.join(name);
    fs::write(&path, content).unwrap_or_else(|e| panic!("writing {}: {e}", path.display()));
    println!("wrote {}", path.display());
}

fn emit(dir: &Path, prefix: &str, b: Builder) {
    let registry = CardRegistry::from_cards(b.cards).expect("unique card ids");
    write(dir, &format!("{prefix}cards.json"), &registry.to_json_string());
    write(dir, &format!("{prefix}suite.json"), &suite_to_json_string(&b.items));
    write(dir, &format!("{prefix}script.json"), &b.script.to_json_string());
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let dir = Path::new(&dir);
    fs::create_dir_all(dir).expect("create fixture dir");

    let mut main_suite = Builder::new();
    build_main(&mut main_suite);
    emit(dir, "", main_suite);

    let mut mini = Builder::new();
    build_mini(&mut mini);
    emit(dir, "mini_", mini);
}
