//! Per-tensor parameter counts of the standard 2D ResNet-50 without its
//! classification head, in definition order.

pub const RESNET50_2D: &[(&str, usize)] = &[
    ("conv1.weight", 9408),
    ("bn1.weight", 64),
    ("bn1.bias", 64),
    ("layer1.0.conv1.weight", 4096),
    ("layer1.0.bn1.weight", 64),
    ("layer1.0.bn1.bias", 64),
    ("layer1.0.conv2.weight", 36864),
    ("layer1.0.bn2.weight", 64),
    ("layer1.0.bn2.bias", 64),
    ("layer1.0.conv3.weight", 16384),
    ("layer1.0.bn3.weight", 256),
    ("layer1.0.bn3.bias", 256),
    ("layer1.0.downsample.0.weight", 16384),
    ("layer1.0.downsample.1.weight", 256),
    ("layer1.0.downsample.1.bias", 256),
    ("layer1.1.conv1.weight", 16384),
    ("layer1.1.bn1.weight", 64),
    ("layer1.1.bn1.bias", 64),
    ("layer1.1.conv2.weight", 36864),
    ("layer1.1.bn2.weight", 64),
    ("layer1.1.bn2.bias", 64),
    ("layer1.1.conv3.weight", 16384),
    ("layer1.1.bn3.weight", 256),
    ("layer1.1.bn3.bias", 256),
    ("layer1.2.conv1.weight", 16384),
    ("layer1.2.bn1.weight", 64),
    ("layer1.2.bn1.bias", 64),
    ("layer1.2.conv2.weight", 36864),
    ("layer1.2.bn2.weight", 64),
    ("layer1.2.bn2.bias", 64),
    ("layer1.2.conv3.weight", 16384),
    ("layer1.2.bn3.weight", 256),
    ("layer1.2.bn3.bias", 256),
    ("layer2.0.conv1.weight", 32768),
    ("layer2.0.bn1.weight", 128),
    ("layer2.0.bn1.bias", 128),
    ("layer2.0.conv2.weight", 147456),
    ("layer2.0.bn2.weight", 128),
    ("layer2.0.bn2.bias", 128),
    ("layer2.0.conv3.weight", 65536),
    ("layer2.0.bn3.weight", 512),
    ("layer2.0.bn3.bias", 512),
    ("layer2.0.downsample.0.weight", 131072),
    ("layer2.0.downsample.1.weight", 512),
    ("layer2.0.downsample.1.bias", 512),
    ("layer2.1.conv1.weight", 65536),
    ("layer2.1.bn1.weight", 128),
    ("layer2.1.bn1.bias", 128),
    ("layer2.1.conv2.weight", 147456),
    ("layer2.1.bn2.weight", 128),
    ("layer2.1.bn2.bias", 128),
    ("layer2.1.conv3.weight", 65536),
    ("layer2.1.bn3.weight", 512),
    ("layer2.1.bn3.bias", 512),
    ("layer2.2.conv1.weight", 65536),
    ("layer2.2.bn1.weight", 128),
    ("layer2.2.bn1.bias", 128),
    ("layer2.2.conv2.weight", 147456),
    ("layer2.2.bn2.weight", 128),
    ("layer2.2.bn2.bias", 128),
    ("layer2.2.conv3.weight", 65536),
    ("layer2.2.bn3.weight", 512),
    ("layer2.2.bn3.bias", 512),
    ("layer2.3.conv1.weight", 65536),
    ("layer2.3.bn1.weight", 128),
    ("layer2.3.bn1.bias", 128),
    ("layer2.3.conv2.weight", 147456),
    ("layer2.3.bn2.weight", 128),
    ("layer2.3.bn2.bias", 128),
    ("layer2.3.conv3.weight", 65536),
    ("layer2.3.bn3.weight", 512),
    ("layer2.3.bn3.bias", 512),
    ("layer3.0.conv1.weight", 131072),
    ("layer3.0.bn1.weight", 256),
    ("layer3.0.bn1.bias", 256),
    ("layer3.0.conv2.weight", 589824),
    ("layer3.0.bn2.weight", 256),
    ("layer3.0.bn2.bias", 256),
    ("layer3.0.conv3.weight", 262144),
    ("layer3.0.bn3.weight", 1024),
    ("layer3.0.bn3.bias", 1024),
    ("layer3.0.downsample.0.weight", 524288),
    ("layer3.0.downsample.1.weight", 1024),
    ("layer3.0.downsample.1.bias", 1024),
    ("layer3.1.conv1.weight", 262144),
    ("layer3.1.bn1.weight", 256),
    ("layer3.1.bn1.bias", 256),
    ("layer3.1.conv2.weight", 589824),
    ("layer3.1.bn2.weight", 256),
    ("layer3.1.bn2.bias", 256),
    ("layer3.1.conv3.weight", 262144),
    ("layer3.1.bn3.weight", 1024),
    ("layer3.1.bn3.bias", 1024),
    ("layer3.2.conv1.weight", 262144),
    ("layer3.2.bn1.weight", 256),
    ("layer3.2.bn1.bias", 256),
    ("layer3.2.conv2.weight", 589824),
    ("layer3.2.bn2.weight", 256),
    ("layer3.2.bn2.bias", 256),
    ("layer3.2.conv3.weight", 262144),
    ("layer3.2.bn3.weight", 1024),
    ("layer3.2.bn3.bias", 1024),
    ("layer3.3.conv1.weight", 262144),
    ("layer3.3.bn1.weight", 256),
    ("layer3.3.bn1.bias", 256),
    ("layer3.3.conv2.weight", 589824),
    ("layer3.3.bn2.weight", 256),
    ("layer3.3.bn2.bias", 256),
    ("layer3.3.conv3.weight", 262144),
    ("layer3.3.bn3.weight", 1024),
    ("layer3.3.bn3.bias", 1024),
    ("layer3.4.conv1.weight", 262144),
    ("layer3.4.bn1.weight", 256),
    ("layer3.4.bn1.bias", 256),
    ("layer3.4.conv2.weight", 589824),
    ("layer3.4.bn2.weight", 256),
    ("layer3.4.bn2.bias", 256),
    ("layer3.4.conv3.weight", 262144),
    ("layer3.4.bn3.weight", 1024),
    ("layer3.4.bn3.bias", 1024),
    ("layer3.5.conv1.weight", 262144),
    ("layer3.5.bn1.weight", 256),
    ("layer3.5.bn1.bias", 256),
    ("layer3.5.conv2.weight", 589824),
    ("layer3.5.bn2.weight", 256),
    ("layer3.5.bn2.bias", 256),
    ("layer3.5.conv3.weight", 262144),
    ("layer3.5.bn3.weight", 1024),
    ("layer3.5.bn3.bias", 1024),
    ("layer4.0.conv1.weight", 524288),
    ("layer4.0.bn1.weight", 512),
    ("layer4.0.bn1.bias", 512),
    ("layer4.0.conv2.weight", 2359296),
    ("layer4.0.bn2.weight", 512),
    ("layer4.0.bn2.bias", 512),
    ("layer4.0.conv3.weight", 1048576),
    ("layer4.0.bn3.weight", 2048),
    ("layer4.0.bn3.bias", 2048),
    ("layer4.0.downsample.0.weight", 2097152),
    ("layer4.0.downsample.1.weight", 2048),
    ("layer4.0.downsample.1.bias", 2048),
    ("layer4.1.conv1.weight", 1048576),
    ("layer4.1.bn1.weight", 512),
    ("layer4.1.bn1.bias", 512),
    ("layer4.1.conv2.weight", 2359296),
    ("layer4.1.bn2.weight", 512),
    ("layer4.1.bn2.bias", 512),
    ("layer4.1.conv3.weight", 1048576),
    ("layer4.1.bn3.weight", 2048),
    ("layer4.1.bn3.bias", 2048),
    ("layer4.2.conv1.weight", 1048576),
    ("layer4.2.bn1.weight", 512),
    ("layer4.2.bn1.bias", 512),
    ("layer4.2.conv2.weight", 2359296),
    ("layer4.2.bn2.weight", 512),
    ("layer4.2.bn2.bias", 512),
    ("layer4.2.conv3.weight", 1048576),
    ("layer4.2.bn3.weight", 2048),
    ("layer4.2.bn3.bias", 2048),
];
