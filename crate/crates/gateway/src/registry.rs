use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use kbqa_core::{
    load_triples, AliasTable, Answer, DictionaryRelationExtractor, Lexicon, LexiconExtractor,
    LlmClient, NodeExtractor, ParseBank, Pipeline, PipelineConfig, PipelineTrace, PredicateAliases,
    PredicateDictionary, PromptTemplate, RelationExtractor, TripleFormat, TripleStore,
};

use crate::api::DatasetInfo;
use crate::descriptor::{DatasetDescriptor, ServiceBinding, ServiceKind};
use crate::error::GatewayError;
use crate::remote::{RemoteNodeExtractor, RemoteRelationExtractor};

/// A registered dataset with everything needed to answer over it.
#[derive(Debug)]
pub struct Dataset {
    pub descriptor: DatasetDescriptor,
    pub store: Arc<TripleStore>,
    /// Built for in-process node extraction only.
    pub lexicon: Option<Arc<Lexicon>>,
    /// Built for in-process relation extraction only.
    pub dictionary: Option<Arc<PredicateDictionary>>,
    pub pipeline: Pipeline,
}

fn read(path: &Path) -> Result<String, GatewayError> {
    std::fs::read_to_string(path).map_err(|e| GatewayError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl Dataset {
    /// Loads the KB and builds the services named by the descriptor.
    pub fn load(
        descriptor: DatasetDescriptor,
        llm: Option<Arc<dyn LlmClient>>,
        template: PromptTemplate,
    ) -> Result<Self, GatewayError> {
        descriptor.validate()?;
        let kb_path = descriptor.kb_path.display().to_string();
        let format: TripleFormat = descriptor
            .kb_format
            .parse()
            .map_err(GatewayError::InvalidDescriptor)?;
        let file = File::open(&descriptor.kb_path).map_err(|e| GatewayError::Io {
            path: kb_path.clone(),
            message: e.to_string(),
        })?;
        let store = Arc::new(
            load_triples(
                BufReader::new(file),
                format,
                &descriptor.dataset_id,
                &descriptor.type_predicate,
            )
            .map_err(|source| GatewayError::Kb {
                path: kb_path,
                source,
            })?,
        );

        let (ne, lexicon): (Arc<dyn NodeExtractor>, _) = match &descriptor.ne_service {
            ServiceBinding::InProcess => {
                let aliases = match &descriptor.entity_aliases {
                    Some(path) => Some(AliasTable::parse(&read(path)?).map_err(|(line, message)| {
                        GatewayError::Aliases {
                            path: path.display().to_string(),
                            line,
                            message,
                        }
                    })?),
                    None => None,
                };
                let lexicon = Arc::new(Lexicon::build(&store, aliases.as_ref(), &descriptor.language));
                (Arc::new(LexiconExtractor::new(lexicon.clone())), Some(lexicon))
            }
            ServiceBinding::Remote { url, timeout_ms } => (
                Arc::new(RemoteNodeExtractor::new(url, Duration::from_millis(*timeout_ms))),
                None,
            ),
        };
        let (re, dictionary): (Arc<dyn RelationExtractor>, _) = match &descriptor.re_service {
            ServiceBinding::InProcess => {
                let aliases = match &descriptor.predicate_aliases {
                    Some(path) => Some(PredicateAliases::parse(&read(path)?).map_err(
                        |(line, message)| GatewayError::Aliases {
                            path: path.display().to_string(),
                            line,
                            message,
                        },
                    )?),
                    None => None,
                };
                let dict = Arc::new(PredicateDictionary::build(&store, aliases.as_ref()));
                (
                    Arc::new(DictionaryRelationExtractor::new(dict.clone(), store.clone())),
                    Some(dict),
                )
            }
            ServiceBinding::Remote { url, timeout_ms } => (
                Arc::new(RemoteRelationExtractor::new(url, Duration::from_millis(*timeout_ms))),
                None,
            ),
        };
        let parse_bank = match &descriptor.parse_bank {
            Some(path) => Some(Arc::new(ParseBank::from_conllu(&read(path)?).map_err(
                |source| GatewayError::ParseBank {
                    path: path.display().to_string(),
                    source,
                },
            )?)),
            None => None,
        };

        let mut pipeline = Pipeline::new(store.clone(), ne, re);
        pipeline.dataset_name = descriptor.display_name().to_string();
        pipeline.language = descriptor.language.clone();
        pipeline.parse_bank = parse_bank;
        pipeline.llm = llm;
        pipeline.template = template;
        pipeline.config = PipelineConfig {
            threshold: descriptor.threshold,
            k: descriptor.k,
            top_m: descriptor.top_m,
            relaxed_threshold: descriptor.relaxed_threshold,
            ..PipelineConfig::default()
        };
        Ok(Dataset {
            descriptor,
            store,
            lexicon,
            dictionary,
            pipeline,
        })
    }

    pub fn info(&self) -> DatasetInfo {
        DatasetInfo {
            dataset_id: self.descriptor.dataset_id.clone(),
            name: self.descriptor.display_name().to_string(),
            language: self.descriptor.language.clone(),
            stats: self.store.stats(),
        }
    }
}

type Snapshot = Arc<BTreeMap<String, Arc<Dataset>>>;

/// Dataset id → dataset. Readers work on an immutable snapshot; every
/// mutation publishes a new one.
pub struct Registry {
    datasets: RwLock<Snapshot>,
    llm: Option<Arc<dyn LlmClient>>,
    template: PromptTemplate,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("datasets", &self.snapshot().keys().collect::<Vec<_>>())
            .field("llm", &self.llm.is_some())
            .finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::new(None, PromptTemplate::default())
    }
}

impl Registry {
    pub fn new(llm: Option<Arc<dyn LlmClient>>, template: PromptTemplate) -> Self {
        Registry {
            datasets: RwLock::new(Arc::new(BTreeMap::new())),
            llm,
            template,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        self.datasets.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Loads and registers a dataset. The KB is loaded before the registry
    /// is touched, so a failing registration leaves it unchanged.
    pub fn register(&self, descriptor: DatasetDescriptor) -> Result<String, GatewayError> {
        let id = descriptor.dataset_id.clone();
        if self.snapshot().contains_key(&id) {
            return Err(GatewayError::DuplicateId(id));
        }
        let dataset = Arc::new(Dataset::load(descriptor, self.llm.clone(), self.template.clone())?);
        let mut guard = self.datasets.write().unwrap_or_else(|e| e.into_inner());
        if guard.contains_key(&id) {
            return Err(GatewayError::DuplicateId(id));
        }
        let mut next = BTreeMap::clone(&guard);
        next.insert(id.clone(), dataset);
        *guard = Arc::new(next);
        Ok(id)
    }

    pub fn deregister(&self, dataset_id: &str) -> Result<(), GatewayError> {
        let mut guard = self.datasets.write().unwrap_or_else(|e| e.into_inner());
        if !guard.contains_key(dataset_id) {
            return Err(GatewayError::DatasetNotFound(dataset_id.to_string()));
        }
        let mut next = BTreeMap::clone(&guard);
        next.remove(dataset_id);
        *guard = Arc::new(next);
        Ok(())
    }

    pub fn get(&self, dataset_id: &str) -> Result<Arc<Dataset>, GatewayError> {
        self.snapshot()
            .get(dataset_id)
            .cloned()
            .ok_or_else(|| GatewayError::DatasetNotFound(dataset_id.to_string()))
    }

    pub fn list(&self) -> Vec<DatasetInfo> {
        self.snapshot().values().map(|d| d.info()).collect()
    }

    pub fn route(&self, dataset_id: &str, kind: ServiceKind) -> Result<ServiceBinding, GatewayError> {
        Ok(self.get(dataset_id)?.descriptor.binding(kind).clone())
    }

    pub fn ask(
        &self,
        dataset_id: &str,
        question: &str,
        conllu: Option<&str>,
    ) -> Result<(Answer, PipelineTrace), GatewayError> {
        let dataset = self.get(dataset_id)?;
        Ok(dataset.pipeline.answer(question, conllu)?)
    }
}
